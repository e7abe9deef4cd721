use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

impl Graph {
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("add", &av, &bv)?;
        let out = zip_map(&av, &bv, |x, y| x + y);
        Ok(self.push(out, &[a, b], || {
            Box::new(|g: &Tensor| vec![Some(g.clone()), Some(g.clone())])
        }))
    }

    /// Sums several same-shaped values left to right.
    pub fn add_n(&self, xs: &[Var]) -> Result<Var> {
        let (first, rest) = xs.split_first().ok_or_else(|| TensorError::InvalidShape {
            op: "add_n",
            shape: Vec::new(),
            reason: "no operands".into(),
        })?;
        rest.iter().try_fold(*first, |acc, &x| self.add(acc, x))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("sub", &av, &bv)?;
        let out = zip_map(&av, &bv, |x, y| x - y);
        Ok(self.push(out, &[a, b], || {
            Box::new(|g: &Tensor| vec![Some(g.clone()), Some(map(g, |x| -x))])
        }))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("mul", &av, &bv)?;
        let out = zip_map(&av, &bv, |x, y| x * y);
        Ok(self.push(out, &[a, b], move || {
            Box::new(move |g: &Tensor| {
                vec![
                    Some(zip_map(g, &bv, |x, y| x * y)),
                    Some(zip_map(g, &av, |x, y| x * y)),
                ]
            })
        }))
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        let out = map(&self.value(x), |v| v * c);
        self.push(out, &[x], move || {
            Box::new(move |g: &Tensor| vec![Some(map(g, |v| v * c))])
        })
    }

    /// `x + bias` with `bias: [d]` broadcast along every axis but the last.
    /// A `[groups, d]` bias applies row `g` to `x[g]`.
    pub fn add_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let d = xv.last_dim();
        let groups = super::nn::param_groups(&xv, &bv, d)
            .filter(|_| xv.rank() > 0 && d > 0)
            .ok_or_else(|| TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            })?;
        let per_group = xv.numel() / d / groups;
        let mut out = xv.data().to_vec();
        for (r, row) in out.chunks_mut(d).enumerate() {
            let p = (r / per_group) * d;
            for (o, b) in row.iter_mut().zip(&bv.data()[p..p + d]) {
                *o += *b;
            }
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), out);
        let bias_shape = bv.shape().to_vec();
        Ok(self.push(out, &[x, bias], move || {
            Box::new(move |g: &Tensor| {
                let mut gb = vec![0.0; groups * d];
                for (r, row) in g.data().chunks(d).enumerate() {
                    let p = (r / per_group) * d;
                    for (acc, v) in gb[p..p + d].iter_mut().zip(row) {
                        *acc += *v;
                    }
                }
                vec![Some(g.clone()), Some(Tensor::from_parts(bias_shape, gb))]
            })
        }))
    }

    /// Reduces the trailing axis.
    pub fn sum_last(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(TensorError::EmptyAxis { op: "sum_last" });
        }
        let d = xv.last_dim();
        let shape = xv.shape()[..xv.rank() - 1].to_vec();
        let data = if d == 0 {
            vec![0.0; shape.iter().product()]
        } else {
            xv.data().chunks(d).map(|r| r.iter().sum()).collect()
        };
        let in_shape = xv.shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, data), &[x], move || {
            Box::new(move |g: &Tensor| {
                let mut out = Vec::with_capacity(g.numel() * d);
                for &v in g.data() {
                    out.extend(std::iter::repeat_n(v, d));
                }
                vec![Some(Tensor::from_parts(in_shape, out))]
            })
        }))
    }

    pub fn sum_all(&self, x: Var) -> Var {
        let xv = self.value(x);
        let total = xv.data().iter().sum();
        let in_shape = xv.shape().to_vec();
        self.push(Tensor::scalar(total), &[x], move || {
            Box::new(move |g: &Tensor| vec![Some(Tensor::full(&in_shape, g.data()[0]))])
        })
    }

    pub fn mean_all(&self, x: Var) -> Var {
        let n = self.value(x).numel().max(1);
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }
}
