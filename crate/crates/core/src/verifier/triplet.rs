use crate::error::{Error, Result};

/// Loss value with gradients with respect to each of the three embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negative: Vec<f64>,
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `max(0, |a - p| - |a - n| + margin)` with Euclidean distances.
///
/// At a zero distance the norm is not differentiable; that term then
/// contributes the zero subgradient.
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<TripletLoss> {
    let dim = anchor.len();
    for (context, v) in [("triplet positive", positive), ("triplet negative", negative)] {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                context,
                expected: dim,
                found: v.len(),
            });
        }
    }
    let dp = euclidean(anchor, positive);
    let dn = euclidean(anchor, negative);
    let raw = dp - dn + margin;
    let mut out = TripletLoss {
        // `f64::max` would swallow a NaN and hide a diverged embedding.
        loss: if raw.is_nan() { raw } else { raw.max(0.0) },
        grad_anchor: vec![0.0; dim],
        grad_positive: vec![0.0; dim],
        grad_negative: vec![0.0; dim],
    };
    if raw.is_nan() || raw <= 0.0 {
        return Ok(out);
    }
    for k in 0..dim {
        let up = if dp > 0.0 { (anchor[k] - positive[k]) / dp } else { 0.0 };
        let un = if dn > 0.0 { (anchor[k] - negative[k]) / dn } else { 0.0 };
        out.grad_anchor[k] = up - un;
        out.grad_positive[k] = -up;
        out.grad_negative[k] = un;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_triplet_has_no_loss() {
        let t = triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[3.0, 0.0], 1.5).unwrap();
        assert_eq!(t.loss, 0.0);
        assert!(t.grad_anchor.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn collapsed_triplet_costs_the_margin() {
        let t = triplet_loss(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], 1.5).unwrap();
        assert_eq!(t.loss, 1.5);
        assert!(t.grad_negative.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_points_apart() {
        let t = triplet_loss(&[0.0], &[1.0], &[0.5], 1.0).unwrap();
        assert_eq!(t.loss, 1.5);
        assert_eq!(t.grad_anchor, vec![0.0]);
        assert_eq!(t.grad_positive, vec![1.0]);
        assert_eq!(t.grad_negative, vec![-1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(triplet_loss(&[0.0, 1.0], &[0.0], &[0.0, 1.0], 1.0).is_err());
    }
}
