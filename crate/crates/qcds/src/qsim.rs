//! Dense statevector simulation with in-place gate application.
//!
//! Amplitudes are stored flat, indexed by the computational basis with qubit 0
//! as the most significant bit. Rotation convention is
//! `R_a(phi) = exp(-i phi sigma_a / 2)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 12;

/// Kinds of gates the simulator supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    RX,
    RY,
    RZ,
    H,
    X,
    Y,
    Z,
    CX,
    CZ,
    TOF,
    CSWAP,
    I,
}

impl GateKind {
    /// Number of wires the gate acts on.
    pub fn arity(self) -> usize {
        match self {
            GateKind::CX | GateKind::CZ => 2,
            GateKind::TOF | GateKind::CSWAP => 3,
            _ => 1,
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::RX | GateKind::RY | GateKind::RZ)
    }
}

/// A gate applied to specific wires of a register.
///
/// For CX/CZ the wire order is (control, target); for TOF it is
/// (control, control, target); for CSWAP it is (control, swap, swap).
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    pub kind: GateKind,
    pub wires: Vec<usize>,
    pub angle: Option<f64>,
}

impl GateOp {
    pub fn new(kind: GateKind, wires: Vec<usize>) -> Self {
        GateOp {
            kind,
            wires,
            angle: None,
        }
    }

    pub fn rotation(kind: GateKind, wire: usize, angle: f64) -> Self {
        debug_assert!(kind.is_rotation());
        GateOp {
            kind,
            wires: vec![wire],
            angle: Some(angle),
        }
    }

    /// The gate that undoes this one.
    pub fn inverse(&self) -> Self {
        let mut inv = self.clone();
        if let Some(a) = inv.angle {
            inv.angle = Some(-a);
        }
        inv
    }
}

/// Full register state: `2^n_qubits` complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Prepare |0...0>.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        if n_qubits < 1 || n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!(
                "n_qubits must be in 1..={MAX_QUBITS}, got {n_qubits}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    /// Build from raw amplitudes; length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let n = amps.len();
        if n < 2 || !n.is_power_of_two() || n > (1 << MAX_QUBITS) {
            return Err(Error::Config(format!("invalid amplitude count {n}")));
        }
        Ok(StateVector {
            n_qubits: n.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Bit mask selecting `qubit` in a basis index (qubit 0 is the MSB).
    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    fn check_wires(&self, op: &GateOp) -> Result<()> {
        if op.wires.len() != op.kind.arity() {
            return Err(Error::Wiring(format!(
                "{:?} takes {} wires, got {}",
                op.kind,
                op.kind.arity(),
                op.wires.len()
            )));
        }
        for (i, &w) in op.wires.iter().enumerate() {
            if w >= self.n_qubits {
                return Err(Error::Wiring(format!(
                    "wire {w} out of range for {} qubits",
                    self.n_qubits
                )));
            }
            if op.wires[..i].contains(&w) {
                return Err(Error::Wiring(format!("duplicate wire {w} in {:?}", op.kind)));
            }
        }
        if op.kind.is_rotation() && op.angle.is_none() {
            return Err(Error::Wiring(format!("{:?} requires an angle", op.kind)));
        }
        Ok(())
    }

    /// Apply a 2x2 unitary to `qubit`, in place.
    fn apply_single(&mut self, qubit: usize, m: [[Complex64; 2]; 2]) {
        let mask = self.mask(qubit);
        for idx in 0..self.amps.len() {
            if idx & mask == 0 {
                let j = idx | mask;
                let a0 = self.amps[idx];
                let a1 = self.amps[j];
                self.amps[idx] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[j] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    /// Apply a gate in place.
    pub fn apply(&mut self, op: &GateOp) -> Result<()> {
        self.check_wires(op)?;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match op.kind {
            GateKind::I => {}
            GateKind::RX => {
                let h = op.angle.unwrap() / 2.0;
                let (c, s) = (h.cos(), h.sin());
                self.apply_single(
                    op.wires[0],
                    [[one * c, -i * s], [-i * s, one * c]],
                );
            }
            GateKind::RY => {
                let h = op.angle.unwrap() / 2.0;
                let (c, s) = (h.cos(), h.sin());
                self.apply_single(op.wires[0], [[one * c, -one * s], [one * s, one * c]]);
            }
            GateKind::RZ => {
                let h = op.angle.unwrap() / 2.0;
                let e_neg = Complex64::from_polar(1.0, -h);
                let e_pos = Complex64::from_polar(1.0, h);
                self.apply_single(op.wires[0], [[e_neg, zero], [zero, e_pos]]);
            }
            GateKind::H => {
                let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                self.apply_single(op.wires[0], [[r, r], [r, -r]]);
            }
            GateKind::X => {
                self.apply_single(op.wires[0], [[zero, one], [one, zero]]);
            }
            GateKind::Y => {
                self.apply_single(op.wires[0], [[zero, -i], [i, zero]]);
            }
            GateKind::Z => {
                self.apply_single(op.wires[0], [[one, zero], [zero, -one]]);
            }
            GateKind::CX => {
                let c = self.mask(op.wires[0]);
                let t = self.mask(op.wires[1]);
                for idx in 0..self.amps.len() {
                    if idx & c != 0 && idx & t == 0 {
                        self.amps.swap(idx, idx | t);
                    }
                }
            }
            GateKind::CZ => {
                let c = self.mask(op.wires[0]);
                let t = self.mask(op.wires[1]);
                for idx in 0..self.amps.len() {
                    if idx & c != 0 && idx & t != 0 {
                        self.amps[idx] = -self.amps[idx];
                    }
                }
            }
            GateKind::TOF => {
                let c0 = self.mask(op.wires[0]);
                let c1 = self.mask(op.wires[1]);
                let t = self.mask(op.wires[2]);
                for idx in 0..self.amps.len() {
                    if idx & c0 != 0 && idx & c1 != 0 && idx & t == 0 {
                        self.amps.swap(idx, idx | t);
                    }
                }
            }
            GateKind::CSWAP => {
                let c = self.mask(op.wires[0]);
                let a = self.mask(op.wires[1]);
                let b = self.mask(op.wires[2]);
                for idx in 0..self.amps.len() {
                    // swap |..1..>|10> <-> |..1..>|01>, visit each pair once
                    if idx & c != 0 && idx & a != 0 && idx & b == 0 {
                        self.amps.swap(idx, (idx & !a) | b);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn apply_all(&mut self, ops: &[GateOp]) -> Result<()> {
        for op in ops {
            self.apply(op)?;
        }
        Ok(())
    }

    /// Expectation of sigma_z on one qubit.
    pub fn sigma_z_expectation(&self, qubit: usize) -> Result<f64> {
        if qubit >= self.n_qubits {
            return Err(Error::Wiring(format!(
                "qubit {qubit} out of range for {} qubits",
                self.n_qubits
            )));
        }
        let mask = self.mask(qubit);
        let mut acc = 0.0;
        for (idx, amp) in self.amps.iter().enumerate() {
            let sign = if idx & mask == 0 { 1.0 } else { -1.0 };
            acc += sign * amp.norm_sqr();
        }
        Ok(acc)
    }

    /// Expectation of the product observable `tensor_{q in qubits} sigma_z`.
    ///
    /// Testing utility; classification uses per-qubit expectations.
    pub fn product_sigma_z_expectation(&self, qubits: &[usize]) -> Result<f64> {
        let mut mask = 0usize;
        for &q in qubits {
            if q >= self.n_qubits {
                return Err(Error::Wiring(format!(
                    "qubit {q} out of range for {} qubits",
                    self.n_qubits
                )));
            }
            mask |= self.mask(q);
        }
        let mut acc = 0.0;
        for (idx, amp) in self.amps.iter().enumerate() {
            let sign = if (idx & mask).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            acc += sign * amp.norm_sqr();
        }
        Ok(acc)
    }
}
