use crate::scalar::Real;
use crate::surrogate::params::Layer;

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// `σ(z) = z · sigmoid(z)` and its derivative of order `k` (`0 ≤ k ≤ 3`).
#[inline]
pub fn swish<T: Real>(z: T, k: u8) -> T {
    let s = sigmoid(z);
    let one = T::one();
    let two = T::lit(2.0);
    let p = s * (one - s);
    match k {
        0 => z * s,
        1 => s + z * p,
        2 => p * (two + z * (one - two * s)),
        3 => {
            let q = two + z * (one - two * s);
            p * (one - two * s) * q + p * ((one - two * s) - two * z * p)
        }
        _ => panic!("swish derivative order {k} not supported"),
    }
}

/// Network output `f(x)` and its input gradient, by one forward and one backward pass.
///
/// Weights are lifted into `S`, so `S = Dual<T>` yields directional derivatives of both.
pub fn value_and_input_grad<T: Real, S: Real + From<T>>(layers: &[Layer<T>], x: &[S]) -> (S, Vec<S>) {
    let hidden = layers.len() - 1;
    let mut h: Vec<S> = x.to_vec();
    let mut slopes: Vec<Vec<S>> = Vec::with_capacity(hidden);
    for layer in &layers[..hidden] {
        let z = affine(layer, &h);
        slopes.push(z.iter().map(|&v| swish(v, 1)).collect());
        h = z.into_iter().map(|v| swish(v, 0)).collect();
    }
    let out = &layers[hidden];
    let f = affine(out, &h);
    let mut g: Vec<S> = out.w.row(0).iter().map(|&w| <S as From<T>>::from(w)).collect();
    for (layer, slope) in layers[..hidden].iter().zip(&slopes).rev() {
        let d: Vec<S> = g.iter().zip(slope).map(|(&a, &b)| a * b).collect();
        let mut next = vec![S::zero(); layer.w.cols()];
        for (i, &di) in d.iter().enumerate() {
            for (n, &w) in next.iter_mut().zip(layer.w.row(i)) {
                *n += di * <S as From<T>>::from(w);
            }
        }
        g = next;
    }
    (f[0], g)
}

/// Plain forward pass.
pub fn value<T: Real, S: Real + From<T>>(layers: &[Layer<T>], x: &[S]) -> S {
    let hidden = layers.len() - 1;
    let mut h: Vec<S> = x.to_vec();
    for layer in &layers[..hidden] {
        h = affine(layer, &h).into_iter().map(|v| swish(v, 0)).collect();
    }
    affine(&layers[hidden], &h)[0]
}

fn affine<T: Real, S: Real + From<T>>(layer: &Layer<T>, x: &[S]) -> Vec<S> {
    (0..layer.w.rows())
        .map(|i| layer.w.row(i).iter().zip(x).fold(<S as From<T>>::from(layer.b[i]), |acc, (&w, &xv)| acc + <S as From<T>>::from(w) * xv))
        .collect()
}
