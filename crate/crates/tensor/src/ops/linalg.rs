use crate::error::{Result, TensorError};
use crate::kernels::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::Tensor;

impl Tensor {
    /// Matrix product.
    ///
    /// Supported forms: `(m,k)·(k,n)`, `(b,m,k)·(b,k,n)` and
    /// `(b,m,k)·(k,n)` (right operand shared across the batch).
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        let mismatch = || TensorError::Matmul {
            a: sa.to_vec(),
            b: sb.to_vec(),
        };
        let (batch, m, k, n, shared_b) = match (sa.len(), sb.len()) {
            (2, 2) => (1, sa[0], sa[1], sb[1], true),
            (3, 3) if sa[0] == sb[0] => (sa[0], sa[1], sa[2], sb[2], false),
            (3, 2) => (sa[0], sa[1], sa[2], sb[1], true),
            _ => return Err(mismatch()),
        };
        let kb = if sb.len() == 3 { sb[1] } else { sb[0] };
        if kb != k {
            return Err(mismatch());
        }
        let mut out = vec![0.0; batch * m * n];
        let (a, b) = (self.data(), other.data());
        if shared_b {
            // rows of all batches stack into one (batch*m, k) matrix
            gemm_nn(a, b, batch * m, k, n, &mut out, false);
        } else {
            for i in 0..batch {
                gemm_nn(
                    &a[i * m * k..(i + 1) * m * k],
                    &b[i * k * n..(i + 1) * k * n],
                    m,
                    k,
                    n,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let out_shape: Vec<usize> = if sa.len() == 3 { vec![batch, m, n] } else { vec![m, n] };
        Tensor::from_op(
            out,
            &out_shape,
            "matmul",
            vec![self.clone(), other.clone()],
            Box::new(move |g, parents, _| {
                let (a, b) = (parents[0].data(), parents[1].data());
                let ga = parents[0].tracks_grad().then(|| {
                    let mut ga = vec![0.0; batch * m * k];
                    if shared_b {
                        gemm_nt(g, b, batch * m, n, k, &mut ga, false);
                    } else {
                        for i in 0..batch {
                            gemm_nt(
                                &g[i * m * n..(i + 1) * m * n],
                                &b[i * k * n..(i + 1) * k * n],
                                m,
                                n,
                                k,
                                &mut ga[i * m * k..(i + 1) * m * k],
                                false,
                            );
                        }
                    }
                    ga
                });
                let gb = parents[1].tracks_grad().then(|| {
                    if shared_b {
                        let mut gb = vec![0.0; k * n];
                        gemm_tn(a, g, k, batch * m, n, &mut gb, false);
                        gb
                    } else {
                        let mut gb = vec![0.0; batch * k * n];
                        for i in 0..batch {
                            gemm_tn(
                                &a[i * m * k..(i + 1) * m * k],
                                &g[i * m * n..(i + 1) * m * n],
                                k,
                                m,
                                n,
                                &mut gb[i * k * n..(i + 1) * k * n],
                                false,
                            );
                        }
                        gb
                    }
                });
                vec![ga, gb]
            }),
        )
    }
}
