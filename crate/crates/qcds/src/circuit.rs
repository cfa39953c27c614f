//! Building and evaluating the layered PQC: feature encoding, per-cell
//! gate order (fixed gate, then parametric rotation, then optional
//! reupload) and the per-qubit sigma_z output vector.

use crate::design::{wiring, Design, FixedGate, QubitDecision, Rotation};
use crate::error::{Error, Result};
use crate::qsim::{GateKind, GateOp, StateVector};

/// A design plus its rotation angles and the number of measured qubits.
///
/// The first `n_measure` qubits supply the classification logits.
#[derive(Debug, Clone)]
pub struct BoundCircuit {
    design: Design,
    /// theta[layer][qubit], radians
    theta: Vec<Vec<f64>>,
    n_measure: usize,
}

impl BoundCircuit {
    pub fn new(design: Design, theta: Vec<Vec<f64>>, n_measure: usize) -> Result<Self> {
        if theta.len() != design.n_layers()
            || theta.iter().any(|row| row.len() != design.n_qubits())
        {
            return Err(Error::Shape(format!(
                "theta grid must be {}x{}",
                design.n_layers(),
                design.n_qubits()
            )));
        }
        if n_measure == 0 || n_measure > design.n_qubits() {
            return Err(Error::Config(format!(
                "n_measure must be in 1..={}, got {n_measure}",
                design.n_qubits()
            )));
        }
        Ok(BoundCircuit {
            design,
            theta,
            n_measure,
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.theta
    }

    pub fn n_measure(&self) -> usize {
        self.n_measure
    }

    pub fn n_params(&self) -> usize {
        self.design.n_layers() * self.design.n_qubits()
    }

    /// Initial encoding: one RY(x_i) per qubit, applied to |0...0>.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<GateOp>> {
        if x.len() != self.design.n_qubits() {
            return Err(Error::Shape(format!(
                "feature vector has {} entries, circuit has {} qubits",
                x.len(),
                self.design.n_qubits()
            )));
        }
        Ok(x.iter()
            .enumerate()
            .map(|(i, &xi)| GateOp::rotation(GateKind::RY, i, xi))
            .collect())
    }

    /// Full gate list for input `x`, in application order.
    pub fn gate_sequence(&self, x: &[f64]) -> Result<Vec<GateOp>> {
        let n = self.design.n_qubits();
        let mut ops = self.encode(x)?;
        for l in 0..self.design.n_layers() {
            for i in 0..n {
                let cell = self.design.cell(l, i);
                ops.push(wiring(cell.fixed_gate, i, n)?);
                ops.push(GateOp::rotation(
                    cell.rotation.gate_kind(),
                    i,
                    self.theta[l][i],
                ));
                if cell.reupload {
                    ops.push(GateOp::rotation(GateKind::RY, i, x[i]));
                }
            }
        }
        Ok(ops)
    }

    /// Evaluate the circuit: returns the sigma_z expectations of the first
    /// `n_measure` qubits, each in [-1, 1].
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut state = StateVector::zero(self.design.n_qubits())?;
        state.apply_all(&self.gate_sequence(x)?)?;
        (0..self.n_measure)
            .map(|q| state.sigma_z_expectation(q))
            .collect()
    }
}

/// Reference designs from the literature, as uniform grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    RyCx,
    RyCz,
    RyCxReupload,
}

pub fn make_benchmark(kind: BenchmarkKind, n_qubits: usize, n_layers: usize) -> Result<Design> {
    let (reupload, fixed_gate) = match kind {
        BenchmarkKind::RyCx => (false, FixedGate::CX),
        BenchmarkKind::RyCz => (false, FixedGate::CZ),
        BenchmarkKind::RyCxReupload => (true, FixedGate::CX),
    };
    Design::uniform(
        n_qubits,
        n_layers,
        QubitDecision {
            reupload,
            rotation: Rotation::RY,
            fixed_gate,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::StateVector;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn zero_theta(d: &Design) -> Vec<Vec<f64>> {
        vec![vec![0.0; d.n_qubits()]; d.n_layers()]
    }

    fn random_theta(rng: &mut impl Rng, d: &Design) -> Vec<Vec<f64>> {
        (0..d.n_layers())
            .map(|_| (0..d.n_qubits()).map(|_| rng.gen_range(-PI..PI)).collect())
            .collect()
    }

    #[test]
    fn encode_identity_on_zero_features() {
        let d = make_benchmark(BenchmarkKind::RyCx, 4, 1).unwrap();
        let c = BoundCircuit::new(d, vec![vec![0.0; 4]], 3).unwrap();
        let mut s = StateVector::zero(4).unwrap();
        s.apply_all(&c.encode(&[0.0; 4]).unwrap()).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn encode_pi_flips_qubit_zero() {
        let d = make_benchmark(BenchmarkKind::RyCx, 4, 1).unwrap();
        let c = BoundCircuit::new(d, vec![vec![0.0; 4]], 3).unwrap();
        let mut s = StateVector::zero(4).unwrap();
        s.apply_all(&c.encode(&[PI, 0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(s.sigma_z_expectation(0).unwrap(), -1.0, epsilon = 1e-12);
        assert!(c.encode(&[0.0; 3]).is_err());
    }

    #[test]
    fn single_qubit_z_design_closed_form() {
        // Z RY(x)|0> = RY(-x)|0>, so the circuit is RY(theta - x)|0> and
        // f(x, theta) = <sigma_z> = cos(theta - x)
        let cell = QubitDecision {
            reupload: false,
            rotation: Rotation::RY,
            fixed_gate: FixedGate::Z,
        };
        let d = Design::uniform(1, 1, cell).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let theta = rng.gen_range(-PI..PI);
            let x = rng.gen_range(0.0..PI);
            let c = BoundCircuit::new(d.clone(), vec![vec![theta]], 1).unwrap();
            let out = c.forward(&[x]).unwrap();
            assert_abs_diff_eq!(out[0], (theta - x).cos(), epsilon = 1e-12);
        }
        let c = BoundCircuit::new(d, vec![vec![0.0]], 1).unwrap();
        assert_abs_diff_eq!(c.forward(&[0.0]).unwrap()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn benchmark_at_zero_angles_outputs_plus_one() {
        let d = make_benchmark(BenchmarkKind::RyCx, 4, 6).unwrap();
        let c = BoundCircuit::new(d.clone(), zero_theta(&d), 3).unwrap();
        let out = c.forward(&[0.0; 4]).unwrap();
        for v in out {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn benchmark_kinds() {
        let cx = make_benchmark(BenchmarkKind::RyCx, 4, 6).unwrap();
        assert_eq!(cx.n_layers() * cx.n_qubits(), 24);
        for l in 0..6 {
            for q in 0..4 {
                let cell = cx.cell(l, q);
                assert!(!cell.reupload);
                assert_eq!(cell.rotation, Rotation::RY);
                assert_eq!(cell.fixed_gate, FixedGate::CX);
            }
        }
        let cz = make_benchmark(BenchmarkKind::RyCz, 4, 6).unwrap();
        assert!(cz
            .cells()
            .iter()
            .flatten()
            .all(|c| c.fixed_gate == FixedGate::CZ && !c.reupload));
        let re = make_benchmark(BenchmarkKind::RyCxReupload, 4, 6).unwrap();
        assert!(re.cells().iter().flatten().all(|c| c.reupload));
    }

    // dense oracle: multiply out the full 16x16 unitary column by column
    fn dense_forward(c: &BoundCircuit, x: &[f64]) -> Vec<f64> {
        let n = c.design().n_qubits();
        let dim = 1 << n;
        let ops = c.gate_sequence(x).unwrap();
        let mut column0 = vec![Complex64::new(0.0, 0.0); dim];
        column0[0] = Complex64::new(1.0, 0.0);
        // accumulate the product one explicit matrix at a time
        let mut state = column0;
        for op in &ops {
            let mut matrix = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
            for b in 0..dim {
                let mut basis = vec![Complex64::new(0.0, 0.0); dim];
                basis[b] = Complex64::new(1.0, 0.0);
                let mut sv = StateVector::from_amplitudes(basis).unwrap();
                sv.apply(op).unwrap();
                for (r, amp) in sv.amplitudes().iter().enumerate() {
                    matrix[r][b] = *amp;
                }
            }
            state = (0..dim)
                .map(|r| (0..dim).map(|col| matrix[r][col] * state[col]).sum())
                .collect();
        }
        (0..c.n_measure())
            .map(|q| {
                let mask = 1 << (n - 1 - q);
                state
                    .iter()
                    .enumerate()
                    .map(|(idx, a)| {
                        if idx & mask == 0 {
                            a.norm_sqr()
                        } else {
                            -a.norm_sqr()
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn forward_matches_dense_oracle_on_benchmark() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let d = make_benchmark(BenchmarkKind::RyCx, 4, 6).unwrap();
        for _ in 0..5 {
            let theta = random_theta(&mut rng, &d);
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..PI)).collect();
            let c = BoundCircuit::new(d.clone(), theta, 3).unwrap();
            let fast = c.forward(&x).unwrap();
            let slow = dense_forward(&c, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn forward_matches_dense_oracle_on_random_designs() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let d = Design::random(&mut rng, 3, 4).unwrap();
            let theta = random_theta(&mut rng, &d);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..PI)).collect();
            let c = BoundCircuit::new(d, theta, 3).unwrap();
            let fast = c.forward(&x).unwrap();
            let slow = dense_forward(&c, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            assert!(fast.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn no_reupload_design_depends_on_x_only_through_encoding() {
        // with all reupload flags off, the gate sequence after the encoding
        // prefix is independent of x
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let d = make_benchmark(BenchmarkKind::RyCx, 4, 6).unwrap();
        let theta = random_theta(&mut rng, &d);
        let c = BoundCircuit::new(d, theta, 3).unwrap();
        let x1: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..PI)).collect();
        let x2: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..PI)).collect();
        let seq1 = c.gate_sequence(&x1).unwrap();
        let seq2 = c.gate_sequence(&x2).unwrap();
        assert_eq!(&seq1[4..], &seq2[4..]);
    }
}
