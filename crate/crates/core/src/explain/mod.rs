pub mod gradcam;
pub mod judge;
pub mod overlay;

pub use gradcam::{grad_cam, normalize_map, weighted_map, CamModel, Heatmap, DEFAULT_LAYER};
pub use judge::{
    aggregate_scores, judge_prompt, parse_verdict, read_verdicts, score_from_mass, scores_table, write_verdicts,
    JudgeClient, JudgePrompt, JudgeRequest, JudgeVerdict, MockJudge, ModelScore, RUBRIC,
};
pub use overlay::{colormap, render_overlay, ALPHA, STOPS};
