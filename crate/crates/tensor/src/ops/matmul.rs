use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// `c = a·b + beta·c` for strided `a: m×k`, `b: k×n` and contiguous `c: m×n`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut().take(m * n) {
            *v *= beta;
        }
        return;
    }
    assert!(c.len() >= m * n);
    let last = |rows: usize, cols: usize, rs: isize, cs: isize| {
        (rows as isize - 1) * rs + (cols as isize - 1) * cs
    };
    assert!(last(m, k, a.1, a.2) < a.0.len() as isize);
    assert!(last(k, n, b.1, b.2) < b.0.len() as isize);
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// How batch slices of `a`, `b` and the output line up.
struct Plan {
    m: usize,
    k: usize,
    n: usize,
    /// `(a_offset, b_offset, out_offset)` per slice.
    slices: Vec<(usize, usize, usize)>,
    out_shape: Vec<usize>,
}

fn broadcast_lead(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank {
            a[i + a.len() - rank]
        } else {
            1
        };
        let db = if i + b.len() >= rank {
            b[i + b.len() - rank]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

fn flat_offset(index: &[usize], shape: &[usize]) -> usize {
    // `shape` is right-aligned against `index`; size-1 axes broadcast.
    let skip = index.len() - shape.len();
    let mut off = 0;
    for (i, &n) in shape.iter().enumerate() {
        let idx = if n == 1 { 0 } else { index[skip + i] };
        off = off * n + idx;
    }
    off
}

fn plan(a: &Tensor, b: &Tensor, trans_b: bool) -> Result<Plan> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "matmul",
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    };
    if a.rank() < 2 || b.rank() < 2 {
        return Err(mismatch());
    }
    let (ar, br) = (a.rank(), b.rank());
    let (m, k) = (a.shape()[ar - 2], a.shape()[ar - 1]);
    let (kb, n) = if trans_b {
        (b.shape()[br - 1], b.shape()[br - 2])
    } else {
        (b.shape()[br - 2], b.shape()[br - 1])
    };
    if k != kb {
        return Err(mismatch());
    }
    let a_lead = &a.shape()[..ar - 2];
    let b_lead = &b.shape()[..br - 2];
    let lead = broadcast_lead("matmul", a_lead, b_lead).map_err(|_| mismatch())?;
    let mut out_shape = lead.clone();
    out_shape.extend([m, n]);

    // A rank-2 right operand lets the whole left operand run as one tall gemm.
    if b_lead.is_empty() && !trans_b {
        let rows = a_lead.iter().product::<usize>() * m;
        return Ok(Plan {
            m: rows,
            k,
            n,
            slices: vec![(0, 0, 0)],
            out_shape,
        });
    }
    let count: usize = lead.iter().product();
    let mut slices = Vec::with_capacity(count);
    let mut idx = vec![0usize; lead.len()];
    for s in 0..count {
        let mut rem = s;
        for ax in (0..lead.len()).rev() {
            idx[ax] = rem % lead[ax];
            rem /= lead[ax];
        }
        slices.push((
            flat_offset(&idx, a_lead) * m * k,
            flat_offset(&idx, b_lead) * k * n,
            s * m * n,
        ));
    }
    Ok(Plan {
        m,
        k,
        n,
        slices,
        out_shape,
    })
}

impl Graph {
    /// Batched matrix product `[.., m, k] @ [.., k, n]` with broadcast
    /// leading axes.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a @ bᵀ` over the last two axes of `b`, without materializing the
    /// transpose.
    pub fn matmul_bt(&self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let p = plan(&av, &bv, trans_b)?;
        let (m, k, n) = (p.m, p.k, p.n);
        // Logical b (k×n) strides; stored as n×k when transposed.
        let (rsb, csb) = if trans_b {
            (1, k as isize)
        } else {
            (n as isize, 1)
        };
        let mut out = vec![0.0; p.out_shape.iter().product()];
        for &(ao, bo, co) in &p.slices {
            gemm(
                m,
                k,
                n,
                (&av.data()[ao..], k as isize, 1),
                (&bv.data()[bo..], rsb, csb),
                &mut out[co..co + m * n],
                0.0,
            );
        }
        let out = Tensor::from_parts(p.out_shape, out);
        let slices = p.slices;
        Ok(self.push(out, &[a, b], move || {
            Box::new(move |g: &Tensor| {
                let gd = g.data();
                let mut ga = vec![0.0; av.numel()];
                let mut gb = vec![0.0; bv.numel()];
                for &(ao, bo, co) in &slices {
                    let gs = &gd[co..co + m * n];
                    // dA = dC · Bᵀ  (m×n · n×k)
                    let bt = if trans_b {
                        (&bv.data()[bo..], k as isize, 1)
                    } else {
                        (&bv.data()[bo..], 1, n as isize)
                    };
                    gemm(
                        m,
                        n,
                        k,
                        (gs, n as isize, 1),
                        bt,
                        &mut ga[ao..ao + m * k],
                        1.0,
                    );
                    if trans_b {
                        // dBstored = dCᵀ · A  (n×m · m×k)
                        gemm(
                            n,
                            m,
                            k,
                            (gs, 1, n as isize),
                            (&av.data()[ao..], k as isize, 1),
                            &mut gb[bo..bo + n * k],
                            1.0,
                        );
                    } else {
                        // dB = Aᵀ · dC  (k×m · m×n)
                        gemm(
                            k,
                            m,
                            n,
                            (&av.data()[ao..], 1, k as isize),
                            (gs, n as isize, 1),
                            &mut gb[bo..bo + k * n],
                            1.0,
                        );
                    }
                }
                vec![
                    Some(Tensor::from_parts(av.shape().to_vec(), ga)),
                    Some(Tensor::from_parts(bv.shape().to_vec(), gb)),
                ]
            })
        }))
    }
}
