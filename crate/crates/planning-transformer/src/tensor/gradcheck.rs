//! Central finite-difference gradient checking.
//!
//! The numeric side only ever runs forward passes, so it stays independent
//! of every backward rule it verifies.

use super::graph::{Graph, Var};
use super::{Float, Tensor};

pub struct GradCheck {
    pub eps: Float,
    pub rtol: Float,
    pub atol: Float,
}

impl Default for GradCheck {
    fn default() -> Self {
        #[cfg(feature = "float64")]
        {
            Self {
                eps: 1e-6,
                rtol: 1e-6,
                atol: 1e-7,
            }
        }
        #[cfg(not(feature = "float64"))]
        {
            Self {
                eps: 1e-3,
                rtol: 1e-3,
                atol: 1e-3,
            }
        }
    }
}

impl GradCheck {
    pub fn with_tolerance(rtol: Float, atol: Float) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    /// Checks d(loss)/d(inputs) for a scalar-valued graph builder.
    ///
    /// `build` receives an eval-mode graph plus one leaf per input tensor
    /// and must return a scalar loss var. Returns the worst offending
    /// mismatch as an error string.
    pub fn check<F>(&self, inputs: &[Tensor], build: F) -> Result<(), String>
    where
        F: Fn(&mut Graph, &[Var]) -> Var,
    {
        let run = |tensors: &[Tensor]| -> Float {
            let mut g = Graph::eval();
            let vars: Vec<Var> = tensors.iter().map(|t| g.leaf_from(t)).collect();
            let loss = build(&mut g, &vars);
            assert_eq!(g.value(loss).numel(), 1, "gradcheck needs a scalar loss");
            g.value(loss).data[0]
        };

        // Analytic gradients.
        let mut g = Graph::eval();
        let vars: Vec<Var> = inputs.iter().map(|t| g.leaf_from(t)).collect();
        let loss = build(&mut g, &vars);
        g.backward(loss);
        let analytic: Vec<Vec<Float>> = vars
            .iter()
            .map(|&v| {
                g.grad(v)
                    .map(<[Float]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; g.value(v).numel()])
            })
            .collect();

        // Numeric gradients, one element at a time.
        let mut work: Vec<Tensor> = inputs.to_vec();
        for (ti, input) in inputs.iter().enumerate() {
            for ei in 0..input.numel() {
                let orig = work[ti].data[ei];
                let h = self.eps * orig.abs().max(1.0);
                work[ti].data[ei] = orig + h;
                let plus = run(&work);
                work[ti].data[ei] = orig - h;
                let minus = run(&work);
                work[ti].data[ei] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let a = analytic[ti][ei];
                let tol = self.atol + self.rtol * a.abs().max(numeric.abs());
                if (a - numeric).abs() > tol {
                    return Err(format!(
                        "gradient mismatch at input {ti} element {ei}: \
                         analytic {a:e} vs numeric {numeric:e} (tol {tol:e})"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Relative error between an analytic and numeric gradient pair, as used by
/// the per-op acceptance checks.
pub fn relative_error(analytic: Float, numeric: Float) -> Float {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}
