use super::{DetectorError, EncodedTargets};
use crate::nn::{mismatch, sigmoid_scalar, Tensor};
use crate::real::Real;

/// Sum-squared detection loss over a batch `(N, B*5, S, S)`, averaged over
/// the `N` images, together with its exact gradient with respect to `raw`.
///
/// Per image:
/// `λ_coord Σ_resp [(σ(tx)-x̂)² + (σ(ty)-ŷ)² + (tw-ŵ)² + (th-ĥ)²]
///  + Σ_resp (σ(c)-1)² + λ_noobj Σ_empty σ(c)²`.
pub fn detection_loss<T: Real>(
    raw: &Tensor<T>,
    targets: &[EncodedTargets<T>],
    lambda_coord: f64,
    lambda_noobj: f64,
) -> Result<(f64, Tensor<T>), DetectorError> {
    let (n, c, h, w) = raw.dims4()?;
    if targets.len() != n {
        return Err(mismatch(format!("{} targets for batch of {n}", targets.len())).into());
    }
    for t in targets {
        if t.grid != h || h != w || c != t.num_anchors * 5 {
            return Err(mismatch(format!(
                "raw {:?} vs targets on a {}-grid with {} anchors",
                raw.shape(),
                t.grid,
                t.num_anchors
            ))
            .into());
        }
    }
    let plane = h * w;
    let inv_n = 1.0 / n as f64;
    let mut grad = Tensor::zeros(raw.shape());
    let mut total = 0.0f64;
    for (b, tgt) in targets.iter().enumerate() {
        let x = raw.item(b);
        let g = grad.item_mut(b);
        for a in 0..tgt.num_anchors {
            for cell in 0..plane {
                let idx = |ch: usize| (a * 5 + ch) * plane + cell;
                let conf = sigmoid_scalar(x[idx(4)]).as_f64();
                let dconf = conf * (1.0 - conf);
                match tgt.coords[a * plane + cell] {
                    Some(t) => {
                        let sx = sigmoid_scalar(x[idx(0)]).as_f64();
                        let sy = sigmoid_scalar(x[idx(1)]).as_f64();
                        let ex = sx - t.offset_x.as_f64();
                        let ey = sy - t.offset_y.as_f64();
                        let ew = x[idx(2)].as_f64() - t.log_w.as_f64();
                        let eh = x[idx(3)].as_f64() - t.log_h.as_f64();
                        let ec = conf - 1.0;
                        total += lambda_coord * (ex * ex + ey * ey + ew * ew + eh * eh) + ec * ec;
                        let k = 2.0 * lambda_coord * inv_n;
                        g[idx(0)] = T::lit(k * ex * sx * (1.0 - sx));
                        g[idx(1)] = T::lit(k * ey * sy * (1.0 - sy));
                        g[idx(2)] = T::lit(k * ew);
                        g[idx(3)] = T::lit(k * eh);
                        g[idx(4)] = T::lit(2.0 * inv_n * ec * dconf);
                    }
                    None => {
                        total += lambda_noobj * conf * conf;
                        g[idx(4)] = T::lit(2.0 * lambda_noobj * inv_n * conf * dconf);
                    }
                }
            }
        }
    }
    Ok((total * inv_n, grad))
}

/// The three parts of [`detection_loss`], each averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub coord: f64,
    pub object: f64,
    pub no_object: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.coord + self.object + self.no_object
    }
}

/// Splits the batch loss into its coordinate, object and no-object terms.
pub fn loss_terms<T: Real>(
    raw: &Tensor<T>,
    targets: &[EncodedTargets<T>],
    lambda_coord: f64,
    lambda_noobj: f64,
) -> Result<LossTerms, DetectorError> {
    let (n, _, h, w) = raw.dims4()?;
    if targets.len() != n {
        return Err(mismatch(format!("{} targets for batch of {n}", targets.len())).into());
    }
    let plane = h * w;
    let mut terms = LossTerms::default();
    for (b, tgt) in targets.iter().enumerate() {
        let x = raw.item(b);
        for (slot, coords) in tgt.coords.iter().enumerate() {
            let (a, cell) = (slot / plane, slot % plane);
            let v = |ch: usize| x[(a * 5 + ch) * plane + cell];
            let conf = sigmoid_scalar(v(4)).as_f64();
            match coords {
                Some(t) => {
                    let ex = sigmoid_scalar(v(0)).as_f64() - t.offset_x.as_f64();
                    let ey = sigmoid_scalar(v(1)).as_f64() - t.offset_y.as_f64();
                    let ew = v(2).as_f64() - t.log_w.as_f64();
                    let eh = v(3).as_f64() - t.log_h.as_f64();
                    terms.coord += lambda_coord * (ex * ex + ey * ey + ew * ew + eh * eh);
                    terms.object += (conf - 1.0) * (conf - 1.0);
                }
                None => terms.no_object += lambda_noobj * conf * conf,
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    terms.coord *= inv_n;
    terms.object *= inv_n;
    terms.no_object *= inv_n;
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::encode_targets;
    use crate::geometry::BBox;

    fn empty_targets(anchors: usize, grid: usize) -> EncodedTargets<f64> {
        let a: Vec<(f64, f64)> = vec![(0.2, 0.2); anchors];
        encode_targets(&[], &a, grid).unwrap()
    }

    #[test]
    fn single_empty_slot_at_zero_logit() {
        let raw = Tensor::<f64>::zeros(&[1, 5, 1, 1]);
        let (loss, grad) = detection_loss(&raw, &[empty_targets(1, 1)], 5.0, 0.5).unwrap();
        assert!((loss - 0.125).abs() < 1e-15);
        // d/dc 0.5 σ(c)² at 0 = 0.5 * 2 * 0.5 * 0.25
        assert!((grad.data()[4] - 0.125).abs() < 1e-15);
        assert!(grad.data()[..4].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_image_loss_vanishes_as_confidence_drops() {
        let t = empty_targets(2, 3);
        let mut last = f64::INFINITY;
        for logit in [0.0, -2.0, -5.0, -10.0, -20.0] {
            let raw = Tensor::<f64>::filled(&[1, 10, 3, 3], logit);
            let (loss, _) = detection_loss(&raw, &[t.clone()], 5.0, 0.5).unwrap();
            assert!(loss < last && loss >= 0.0);
            last = loss;
        }
        assert!(last < 1e-15);
    }

    #[test]
    fn perfect_prediction_is_near_zero() {
        let a = vec![(0.2, 0.3), (0.5, 0.5)];
        let boxes = [
            BBox::new(0.1, 0.1, 0.35, 0.4).unwrap(),
            BBox::new(0.5, 0.4, 0.95, 0.9).unwrap(),
        ];
        let t = encode_targets(&boxes, &a, 4).unwrap();
        let raw = t.to_raw(40.0, -40.0);
        let (loss, _) = detection_loss(&raw, &[t], 5.0, 0.5).unwrap();
        assert!(loss < 1e-12, "{loss}");
    }

    #[test]
    fn batch_loss_is_mean_of_items() {
        let a = vec![(0.2, 0.3)];
        let t1 = encode_targets(&[BBox::new(0.1, 0.1, 0.35, 0.4).unwrap()], &a, 2).unwrap();
        let t2 = encode_targets(&[], &a, 2).unwrap();
        let r1 = Tensor::<f64>::filled(&[1, 5, 2, 2], 0.3);
        let r2 = Tensor::<f64>::filled(&[1, 5, 2, 2], -0.7);
        let (l1, _) = detection_loss(&r1, &[t1.clone()], 5.0, 0.5).unwrap();
        let (l2, _) = detection_loss(&r2, &[t2.clone()], 5.0, 0.5).unwrap();
        let both = Tensor::stack(&[
            &r1.clone().reshape(&[5, 2, 2]).unwrap(),
            &r2.clone().reshape(&[5, 2, 2]).unwrap(),
        ])
        .unwrap();
        let (l, _) = detection_loss(&both, &[t1, t2], 5.0, 0.5).unwrap();
        assert!((l - 0.5 * (l1 + l2)).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch() {
        let raw = Tensor::<f64>::zeros(&[1, 10, 2, 2]);
        assert!(detection_loss(&raw, &[empty_targets(1, 2)], 5.0, 0.5).is_err());
        assert!(detection_loss(&raw, &[], 5.0, 0.5).is_err());
    }

    #[test]
    fn terms_sum_to_loss() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let anchors = [(0.2, 0.3), (0.5, 0.4)];
        let gt = [
            BBox::new(0.1, 0.1, 0.3, 0.4).unwrap(),
            BBox::new(0.5, 0.5, 0.9, 0.8).unwrap(),
        ];
        let targets = vec![
            encode_targets(&gt, &anchors, 4).unwrap(),
            encode_targets(&gt[..1], &anchors, 4).unwrap(),
        ];
        let data = (0..2 * 10 * 16).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let raw = Tensor::<f64>::from_vec(&[2, 10, 4, 4], data).unwrap();
        let (loss, _) = detection_loss(&raw, &targets, 5.0, 0.5).unwrap();
        let terms = loss_terms(&raw, &targets, 5.0, 0.5).unwrap();
        assert!((terms.total() - loss).abs() < 1e-12);
        assert!(terms.coord > 0.0 && terms.object > 0.0 && terms.no_object > 0.0);
    }
}
