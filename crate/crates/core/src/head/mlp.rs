use crate::error::{Error, Result};
use crate::real::Real;

/// Parameters of `out = W2·relu(W1·f + b1) + b2` with a two-component output.
///
/// `w1` is row-major `hidden × input`, `w2` row-major `2 × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<F> {
    pub input: usize,
    pub hidden: usize,
    pub w1: Vec<F>,
    pub b1: Vec<F>,
    pub w2: Vec<F>,
    pub b2: [F; 2],
}

/// Intermediate values of a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    pub pre: Vec<F>,
    pub hidden: Vec<F>,
    pub out: [F; 2],
}

impl<F: Real> MlpParams<F> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        MlpParams {
            input,
            hidden,
            w1: vec![F::zero(); hidden * input],
            b1: vec![F::zero(); hidden],
            w2: vec![F::zero(); 2 * hidden],
            b2: [F::zero(); 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("W1 length", self.hidden * self.input, self.w1.len()),
            ("b1 length", self.hidden, self.b1.len()),
            ("W2 length", 2 * self.hidden, self.w2.len()),
        ];
        for (what, expected, actual) in checks {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    what,
                    expected,
                    actual,
                });
            }
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("MLP parameters contain non-finite values"));
        }
        Ok(())
    }

    pub fn cast<G: Real>(&self) -> MlpParams<G> {
        let conv = |v: &[F]| v.iter().map(|&x| G::of(x.to_f64())).collect::<Vec<G>>();
        MlpParams {
            input: self.input,
            hidden: self.hidden,
            w1: conv(&self.w1),
            b1: conv(&self.b1),
            w2: conv(&self.w2),
            b2: [G::of(self.b2[0].to_f64()), G::of(self.b2[1].to_f64())],
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 2
    }

    pub fn forward(&self, features: &[F]) -> Result<[F; 2]> {
        Ok(self.forward_cached(features)?.out)
    }

    pub fn forward_cached(&self, features: &[F]) -> Result<ForwardCache<F>> {
        if features.len() != self.input {
            return Err(Error::DimensionMismatch {
                what: "feature length",
                expected: self.input,
                actual: features.len(),
            });
        }
        let pre: Vec<F> = self
            .w1
            .chunks_exact(self.input)
            .zip(&self.b1)
            .map(|(row, &b)| row.iter().zip(features).map(|(&w, &f)| w * f).sum::<F>() + b)
            .collect();
        let hidden: Vec<F> = pre.iter().map(|&v| v.max(F::zero())).collect();
        let mut out = self.b2;
        for (o, row) in out.iter_mut().zip(self.w2.chunks_exact(self.hidden)) {
            *o += row.iter().zip(&hidden).map(|(&w, &h)| w * h).sum::<F>();
        }
        Ok(ForwardCache { pre, hidden, out })
    }

    /// Accumulates parameter gradients for one sample into `grads` given
    /// `d_out = ∂L/∂out`. Returns `∂L/∂features`.
    pub fn backward(
        &self,
        features: &[F],
        cache: &ForwardCache<F>,
        d_out: [F; 2],
        grads: &mut MlpParams<F>,
    ) -> Vec<F> {
        let mut d_pre = vec![F::zero(); self.hidden];
        for (k, row) in self.w2.chunks_exact(self.hidden).enumerate() {
            grads.b2[k] += d_out[k];
            let grow = &mut grads.w2[k * self.hidden..(k + 1) * self.hidden];
            for ((g, &h), (d, &w)) in grow
                .iter_mut()
                .zip(&cache.hidden)
                .zip(d_pre.iter_mut().zip(row))
            {
                *g += d_out[k] * h;
                *d += d_out[k] * w;
            }
        }
        for (d, &p) in d_pre.iter_mut().zip(&cache.pre) {
            if p <= F::zero() {
                *d = F::zero();
            }
        }
        let mut d_features = vec![F::zero(); self.input];
        for (i, &d) in d_pre.iter().enumerate() {
            if d == F::zero() {
                continue;
            }
            grads.b1[i] += d;
            let row = &self.w1[i * self.input..(i + 1) * self.input];
            let grow = &mut grads.w1[i * self.input..(i + 1) * self.input];
            for ((g, df), (&w, &f)) in grow
                .iter_mut()
                .zip(d_features.iter_mut())
                .zip(row.iter().zip(features))
            {
                *g += d * f;
                *df += d * w;
            }
        }
        d_features
    }

    /// Iterates all parameters in a fixed order: W1, b1, W2, b2.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut F> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = &F> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> MlpParams<f64> {
        let mut p = MlpParams::zeros(input, hidden);
        for v in p.iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        p
    }

    #[test]
    fn bias_passthrough() {
        let mut p = MlpParams::<f32>::zeros(4, 3);
        p.b2 = [0.5, -0.25];
        for f in [[0.0; 4], [1.0, -2.0, 3.0, 0.5]] {
            assert_eq!(p.forward(&f).unwrap(), [0.5, -0.25]);
        }
    }

    #[test]
    fn dead_units_pass_only_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = random(&mut rng, 4, 6);
        for w in p.w1.iter_mut() {
            *w = -w.abs();
        }
        p.b1.iter_mut().for_each(|b| *b = 0.0);
        p.b2 = [0.3, 0.7];
        let cache = p.forward_cached(&[0.2, 0.4, 1.0, 0.1]).unwrap();
        assert!(cache.pre.iter().all(|&v| v < 0.0));
        assert_eq!(cache.out, [0.3, 0.7]);
    }

    #[test]
    fn wrong_feature_length() {
        let p = MlpParams::<f32>::zeros(4, 2);
        assert!(matches!(
            p.forward(&[0.0; 3]),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 3,
                ..
            })
        ));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = random(&mut rng, 6, 5);
            let f: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d_out = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let cache = p.forward_cached(&f).unwrap();
            let mut grads = MlpParams::zeros(6, 5);
            let analytic = p.backward(&f, &cache, d_out, &mut grads);
            let h = 1e-5;
            for i in 0..6 {
                let mut hi = f.clone();
                hi[i] += h;
                let mut lo = f.clone();
                lo[i] -= h;
                let a = p.forward(&hi).unwrap();
                let b = p.forward(&lo).unwrap();
                let fd = (d_out[0] * (a[0] - b[0]) + d_out[1] * (a[1] - b[1])) / (2.0 * h);
                let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
                assert!(rel < 1e-4, "feature {i}: {fd} vs {}", analytic[i]);
            }
        }
    }
}
