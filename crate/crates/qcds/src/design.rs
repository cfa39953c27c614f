//! The discrete search space: per-qubit design decisions, random generation,
//! gestalt similarity, tiling to wider registers and the JSON file format.

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qsim::{GateKind, GateOp};
use crate::similarity;

/// Parametric rotation axis choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rotation {
    #[serde(rename = "X")]
    RX,
    #[serde(rename = "Y")]
    RY,
    #[serde(rename = "Z")]
    RZ,
}

impl Rotation {
    pub const ALL: [Rotation; 3] = [Rotation::RX, Rotation::RY, Rotation::RZ];

    pub fn gate_kind(self) -> GateKind {
        match self {
            Rotation::RX => GateKind::RX,
            Rotation::RY => GateKind::RY,
            Rotation::RZ => GateKind::RZ,
        }
    }
}

/// Nonparametric gate choice. Identity is deliberately not in the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FixedGate {
    H,
    X,
    Y,
    Z,
    CX,
    CZ,
    TOF,
    CSWAP,
}

impl FixedGate {
    pub const ALL: [FixedGate; 8] = [
        FixedGate::H,
        FixedGate::X,
        FixedGate::Y,
        FixedGate::Z,
        FixedGate::CX,
        FixedGate::CZ,
        FixedGate::TOF,
        FixedGate::CSWAP,
    ];

    /// Number of distinct wires the gate needs.
    pub fn arity(self) -> usize {
        match self {
            FixedGate::CX | FixedGate::CZ => 2,
            FixedGate::TOF | FixedGate::CSWAP => 3,
            _ => 1,
        }
    }

    pub fn gate_kind(self) -> GateKind {
        match self {
            FixedGate::H => GateKind::H,
            FixedGate::X => GateKind::X,
            FixedGate::Y => GateKind::Y,
            FixedGate::Z => GateKind::Z,
            FixedGate::CX => GateKind::CX,
            FixedGate::CZ => GateKind::CZ,
            FixedGate::TOF => GateKind::TOF,
            FixedGate::CSWAP => GateKind::CSWAP,
        }
    }
}

/// One cell of the design grid: the three decisions for a qubit at a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QubitDecision {
    pub reupload: bool,
    #[serde(rename = "rot")]
    pub rotation: Rotation,
    #[serde(rename = "gate")]
    pub fixed_gate: FixedGate,
}

impl QubitDecision {
    /// Index of this decision in the 48-element outcome table.
    pub fn token(&self) -> u8 {
        let r = self.reupload as u8;
        let rot = Rotation::ALL.iter().position(|&x| x == self.rotation).unwrap() as u8;
        let g = FixedGate::ALL
            .iter()
            .position(|&x| x == self.fixed_gate)
            .unwrap() as u8;
        r * 24 + rot * 8 + g
    }
}

/// Per-gate control/target assignment for the cell acting on qubit `i`:
/// nearest neighbors with wraparound.
///
/// CX, CZ: control `i`, target `i+1`; TOF: controls `i`, `i+1`, target `i+2`;
/// CSWAP: control `i`, swapped wires `i+1`, `i+2` (all mod N).
pub fn wiring(gate: FixedGate, qubit: usize, n_qubits: usize) -> Result<GateOp> {
    let arity = gate.arity();
    if arity > n_qubits {
        return Err(Error::Wiring(format!(
            "{gate:?} needs {arity} distinct wires but the register has {n_qubits}"
        )));
    }
    let wires: Vec<usize> = (0..arity).map(|k| (qubit + k) % n_qubits).collect();
    Ok(GateOp::new(gate.gate_kind(), wires))
}

/// A point of the search space: an `n_layers x n_qubits` grid of decisions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Design {
    n_qubits: usize,
    /// cells[layer][qubit]
    cells: Vec<Vec<QubitDecision>>,
}

#[derive(Serialize, Deserialize)]
struct DesignFile {
    qubits: usize,
    layers: Vec<Vec<QubitDecision>>,
}

impl Design {
    pub fn new(n_qubits: usize, cells: Vec<Vec<QubitDecision>>) -> Result<Self> {
        if n_qubits == 0 || cells.is_empty() {
            return Err(Error::Config("design must have >= 1 qubit and layer".into()));
        }
        for row in &cells {
            if row.len() != n_qubits {
                return Err(Error::Config(format!(
                    "layer width {} does not match {} qubits",
                    row.len(),
                    n_qubits
                )));
            }
        }
        Ok(Design { n_qubits, cells })
    }

    /// Uniform grid of one repeated decision.
    pub fn uniform(n_qubits: usize, n_layers: usize, cell: QubitDecision) -> Result<Self> {
        if n_layers == 0 {
            return Err(Error::Config("n_layers must be >= 1".into()));
        }
        Design::new(n_qubits, vec![vec![cell; n_qubits]; n_layers])
    }

    /// Design built by repeating one layer row.
    pub fn from_layer(row: Vec<QubitDecision>, n_layers: usize) -> Result<Self> {
        let n_qubits = row.len();
        if n_layers == 0 {
            return Err(Error::Config("n_layers must be >= 1".into()));
        }
        Design::new(n_qubits, vec![row; n_layers])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, layer: usize, qubit: usize) -> &QubitDecision {
        &self.cells[layer][qubit]
    }

    pub fn cells(&self) -> &[Vec<QubitDecision>] {
        &self.cells
    }

    /// The decision pool for one cell at register width `n_qubits`:
    /// gates whose wires cannot all be distinct are excluded.
    pub fn cell_pool(n_qubits: usize) -> Vec<QubitDecision> {
        let mut pool = Vec::with_capacity(48);
        for &reupload in &[false, true] {
            for &rotation in &Rotation::ALL {
                for &fixed_gate in &FixedGate::ALL {
                    if fixed_gate.arity() <= n_qubits {
                        pool.push(QubitDecision {
                            reupload,
                            rotation,
                            fixed_gate,
                        });
                    }
                }
            }
        }
        pool
    }

    /// Draw every cell independently and uniformly from the pool.
    pub fn random(rng: &mut impl Rng, n_qubits: usize, n_layers: usize) -> Result<Self> {
        if n_qubits == 0 || n_layers == 0 {
            return Err(Error::Config("design dimensions must be >= 1".into()));
        }
        let pool = Self::cell_pool(n_qubits);
        let cells = (0..n_layers)
            .map(|_| {
                (0..n_qubits)
                    .map(|_| pool[rng.gen_range(0..pool.len())])
                    .collect()
            })
            .collect();
        Design::new(n_qubits, cells)
    }

    /// Row-major token sequence, one symbol per cell, for gestalt matching.
    pub fn token_sequence(&self) -> Vec<u8> {
        self.cells
            .iter()
            .flat_map(|row| row.iter().map(|c| c.token()))
            .collect()
    }

    /// Widen the register by repeating the decision pattern: output cell
    /// `(l, j)` copies `(l, j mod n_qubits)`. Parameters are not carried over.
    pub fn tile(&self, target_qubits: usize) -> Result<Design> {
        if target_qubits < self.n_qubits {
            return Err(Error::Tiling(format!(
                "cannot tile a {}-qubit design down to {target_qubits} qubits",
                self.n_qubits
            )));
        }
        let cells = self
            .cells
            .iter()
            .map(|row| (0..target_qubits).map(|j| row[j % self.n_qubits]).collect())
            .collect();
        Design::new(target_qubits, cells)
    }

    pub fn to_json(&self) -> String {
        let file = DesignFile {
            qubits: self.n_qubits,
            layers: self.cells.clone(),
        };
        serde_json::to_string_pretty(&file).expect("design serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Design> {
        let file: DesignFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Design::new(file.qubits, file.layers)
    }
}

/// Number of designs in the space: `48 ^ (n_qubits * n_layers)`.
pub fn space_size(n_qubits: usize, n_layers: usize) -> Result<BigUint> {
    if n_qubits == 0 || n_layers == 0 {
        return Err(Error::Config("design dimensions must be >= 1".into()));
    }
    Ok(BigUint::from(48u32).pow((n_qubits * n_layers) as u32))
}

/// Ratcliff-Obershelp ratio over the two designs' token sequences.
pub fn design_similarity(a: &Design, b: &Design) -> Result<f64> {
    if a.n_qubits != b.n_qubits || a.n_layers() != b.n_layers() {
        return Err(Error::Comparison(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.n_layers(),
            a.n_qubits,
            b.n_layers(),
            b.n_qubits
        )));
    }
    Ok(similarity::ratio(&a.token_sequence(), &b.token_sequence()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn space_size_values() {
        assert_eq!(space_size(1, 1).unwrap(), BigUint::from(48u32));
        let big = space_size(4, 6).unwrap();
        assert!(big > BigUint::from(10u32).pow(30));
        assert!(space_size(1, 0).is_err());
    }

    #[test]
    fn cell_pool_has_48_outcomes() {
        assert_eq!(Design::cell_pool(4).len(), 48);
        // TOF/CSWAP excluded below 3 qubits, CX/CZ below 2
        assert_eq!(Design::cell_pool(2).len(), 36);
        assert_eq!(Design::cell_pool(1).len(), 24);
    }

    #[test]
    fn tokens_are_distinct() {
        let pool = Design::cell_pool(4);
        let mut tokens: Vec<u8> = pool.iter().map(|c| c.token()).collect();
        tokens.sort_unstable();
        tokens.dedup();
        assert_eq!(tokens.len(), 48);
        assert!(tokens.iter().all(|&t| t < 48));
    }

    #[test]
    fn random_design_is_seed_reproducible() {
        let a = Design::random(&mut ChaCha8Rng::seed_from_u64(5), 4, 6).unwrap();
        let b = Design::random(&mut ChaCha8Rng::seed_from_u64(5), 4, 6).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = Design::random(&mut ChaCha8Rng::seed_from_u64(6), 4, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_design_cell_frequencies_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 48];
        let n = 10_000;
        for _ in 0..n {
            let d = Design::random(&mut rng, 4, 1).unwrap();
            counts[d.cell(0, 0).token() as usize] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / 48.0).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn similarity_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Design::random(&mut rng, 4, 6).unwrap();
        let b = Design::random(&mut rng, 4, 6).unwrap();
        assert_eq!(design_similarity(&a, &a).unwrap(), 1.0);
        let ab = design_similarity(&a, &b).unwrap();
        let ba = design_similarity(&b, &a).unwrap();
        assert_eq!(ab, ba);
        assert!((0.0..=1.0).contains(&ab));
        let narrow = Design::random(&mut rng, 3, 6).unwrap();
        assert!(design_similarity(&a, &narrow).is_err());
    }

    #[test]
    fn tiling_copies_the_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Design::random(&mut rng, 4, 6).unwrap();
        let wide = d.tile(9).unwrap();
        assert_eq!(wide.n_qubits(), 9);
        for l in 0..6 {
            assert_eq!(wide.cell(l, 4), d.cell(l, 0));
            assert_eq!(wide.cell(l, 8), d.cell(l, 0));
            assert_eq!(wide.cell(l, 7), d.cell(l, 3));
        }
        assert_eq!(d.tile(4).unwrap(), d);
        assert!(d.tile(3).is_err());
        // idempotent in pattern
        assert_eq!(wide.tile(9).unwrap(), wide);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let d = Design::random(&mut rng, 4, 6).unwrap();
            assert_eq!(Design::from_json(&d.to_json()).unwrap(), d);
        }
    }

    #[test]
    fn json_format_matches_schema() {
        let cell = QubitDecision {
            reupload: false,
            rotation: Rotation::RY,
            fixed_gate: FixedGate::CX,
        };
        let d = Design::uniform(2, 1, cell).unwrap();
        let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(v["qubits"], 2);
        assert_eq!(v["layers"][0][0]["reupload"], false);
        assert_eq!(v["layers"][0][0]["rot"], "Y");
        assert_eq!(v["layers"][0][0]["gate"], "CX");
    }

    #[test]
    fn unknown_gate_token_is_a_parse_error() {
        let text = r#"{"qubits":1,"layers":[[{"reupload":false,"rot":"Y","gate":"CY"}]]}"#;
        match Design::from_json(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wiring_convention() {
        let op = wiring(FixedGate::CX, 3, 4).unwrap();
        assert_eq!(op.wires, vec![3, 0]);
        let op = wiring(FixedGate::TOF, 2, 4).unwrap();
        assert_eq!(op.wires, vec![2, 3, 0]);
        let op = wiring(FixedGate::CSWAP, 0, 3).unwrap();
        assert_eq!(op.wires, vec![0, 1, 2]);
        assert!(wiring(FixedGate::TOF, 0, 2).is_err());
        assert!(wiring(FixedGate::CX, 0, 1).is_err());
    }
}
