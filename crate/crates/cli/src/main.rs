fn main() {
    std::process::exit(dvit_cli::run(std::env::args_os()));
}
