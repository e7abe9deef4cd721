use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

fn permute_data(data: &[f64], shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let rank = shape.len();
    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| strides[a]).collect();
    let n = data.len();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return (out_shape, out);
    }
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    let inner = rank - 1;
    loop {
        // innermost axis in a tight loop
        let len = out_shape[inner];
        let st = src_strides[inner];
        for j in 0..len {
            out.push(data[offset + j * st]);
        }
        // advance outer axes
        let mut ax = inner;
        loop {
            if ax == 0 {
                return (out_shape, out);
            }
            ax -= 1;
            idx[ax] += 1;
            offset += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= src_strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

impl Graph {
    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if shape.iter().product::<usize>() != xv.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: xv.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let in_shape = xv.shape().to_vec();
        let out = Tensor::from_parts(shape.to_vec(), xv.data().to_vec());
        Ok(self.push(out, &[x], move || {
            Box::new(move |g: &Tensor| vec![Some(Tensor::from_parts(in_shape, g.data().to_vec()))])
        }))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, x: Var, axes: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let rank = xv.rank();
        let mut seen = vec![false; rank];
        let valid = axes.len() == rank
            && axes
                .iter()
                .all(|&a| a < rank && !std::mem::replace(&mut seen[a], true));
        if !valid || rank == 0 {
            return Err(TensorError::InvalidShape {
                op: "permute",
                shape: xv.shape().to_vec(),
                reason: format!("bad axis order {axes:?}"),
            });
        }
        let (shape, data) = permute_data(xv.data(), xv.shape(), axes);
        let mut inverse = vec![0; rank];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Ok(self.push(Tensor::from_parts(shape, data), &[x], move || {
            Box::new(move |g: &Tensor| {
                let (s, d) = permute_data(g.data(), g.shape(), &inverse);
                vec![Some(Tensor::from_parts(s, d))]
            })
        }))
    }

    /// `x[.., start..end, ..]` along `axis`.
    pub fn slice(&self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(TensorError::InvalidShape {
                op: "slice",
                shape,
                reason: format!("axis {axis} range {start}..{end}"),
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let len = shape[axis];
        let width = end - start;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = o * len * inner;
            data.extend_from_slice(&xv.data()[base + start * inner..base + end * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = width;
        Ok(
            self.push(Tensor::from_parts(out_shape, data), &[x], move || {
                Box::new(move |g: &Tensor| {
                    let mut full = vec![0.0; outer * len * inner];
                    for o in 0..outer {
                        let base = o * len * inner;
                        full[base + start * inner..base + end * inner]
                            .copy_from_slice(&g.data()[o * width * inner..(o + 1) * width * inner]);
                    }
                    vec![Some(Tensor::from_parts(shape, full))]
                })
            }),
        )
    }

    /// Stacks same-shaped values along a new leading axis.
    pub fn stack(&self, xs: &[Var]) -> Result<Var> {
        let values: Vec<_> = xs.iter().map(|&x| self.value(x)).collect();
        let Some(first) = values.first() else {
            return Err(TensorError::InvalidShape {
                op: "stack",
                shape: Vec::new(),
                reason: "no operands".into(),
            });
        };
        let item_shape = first.shape().to_vec();
        for v in &values[1..] {
            if v.shape() != item_shape.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "stack",
                    lhs: item_shape,
                    rhs: v.shape().to_vec(),
                });
            }
        }
        let n = first.numel();
        let mut data = Vec::with_capacity(n * values.len());
        for v in &values {
            data.extend_from_slice(v.data());
        }
        let mut shape = vec![values.len()];
        shape.extend_from_slice(&item_shape);
        let count = values.len();
        Ok(self.push(Tensor::from_parts(shape, data), xs, move || {
            Box::new(move |g: &Tensor| {
                (0..count)
                    .map(|i| {
                        Some(Tensor::from_parts(
                            item_shape.clone(),
                            g.data()[i * n..(i + 1) * n].to_vec(),
                        ))
                    })
                    .collect()
            })
        }))
    }

    /// `x[i]` along the leading axis.
    pub fn select(&self, x: Var, i: usize) -> Result<Var> {
        let shape = self.shape(x);
        if shape.is_empty() || i >= shape[0] {
            return Err(TensorError::InvalidShape {
                op: "select",
                shape,
                reason: format!("index {i}"),
            });
        }
        let s = self.slice(x, 0, i, i + 1)?;
        self.reshape(s, &shape[1..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_matches_index_oracle() {
        let g = Graph::new();
        let shape = [2, 3, 4];
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let x = g.constant(Tensor::new(shape.to_vec(), data.clone()).unwrap());
        let y = g.permute(x, &[2, 0, 1]).unwrap();
        let yv = g.value(y);
        assert_eq!(yv.shape(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(yv.get(&[k, i, j]).unwrap(), data[i * 12 + j * 4 + k]);
                }
            }
        }
    }

    #[test]
    fn slice_middle_axis() {
        let g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 3, 1], (0..6).map(f64::from).collect()).unwrap());
        let y = g.slice(x, 1, 1, 3).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 4.0, 5.0]);
    }

    #[test]
    fn slice_out_of_range_errors() {
        let g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        assert!(g.slice(x, 1, 2, 4).is_err());
    }
}
