use crate::graph::Error;
use crate::tensor::Tensor;

/// Central-difference gradient estimate of a scalar function, same shape
/// as `x`. The testing oracle for [`crate::Graph::backward`]: it only ever
/// evaluates `f`, never the tape.
pub fn finite_difference_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor, Error>
where
    F: FnMut(&Tensor) -> f64,
{
    assert!(h > 0.0, "finite_difference: step {} must be positive", h);
    let mut grad = vec![0.0; x.len()];
    let base = x.data().to_vec();
    for i in 0..x.len() {
        let mut probe = base.clone();
        probe[i] = base[i] + h;
        let fp = f(&Tensor::new(x.shape().to_vec(), probe.clone()));
        probe[i] = base[i] - h;
        let fm = f(&Tensor::new(x.shape().to_vec(), probe));
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite { op: "finite_difference", index: i });
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    Ok(Tensor::new(x.shape().to_vec(), grad))
}

/// Largest relative coordinate discrepancy between two gradients, with the
/// denominator floored so near-zero entries compare absolutely.
pub fn max_rel_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape(), "rel_error: shapes {:?}, {:?}", a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
