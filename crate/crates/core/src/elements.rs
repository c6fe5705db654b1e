//! Linear mode transformations: beam splitters, polarizing splitters, wave
//! plates, retarders, delays, phase shifts and loss, plus ordered circuits.
//!
//! Conventions, fixed globally and exercised by the convention-flip test in
//! the protocol module:
//!
//! * beam splitter: `(a, b) -> (sqrt(T) a + i sqrt(R) b, i sqrt(R) a + sqrt(T) b)`;
//! * polarizing splitter: H transmits (stays on its port), V reflects to the
//!   other port with phase `i` ([`ReflectionConvention::PhaseI`], the default)
//!   or `1` ([`ReflectionConvention::RealPbs`]);
//! * wave plates: angle measured from the H axis with rotation matrix
//!   `R(t) = [[cos t, -sin t], [sin t, cos t]]`, HWP = `R diag(1,-1) R^-1`,
//!   QWP = `R diag(1,i) R^-1`;
//! * loss multiplies amplitudes by `sqrt(T)` (postselected-norm bookkeeping).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{BasisKet, ModeLabel, Path, PhotonicState, Pol};

/// Phase picked up on reflection at a polarizing splitter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReflectionConvention {
    /// `i` on every PBS reflection (documented default).
    #[default]
    PhaseI,
    /// Unit reflection phase; used to verify convention independence.
    RealPbs,
}

impl ReflectionConvention {
    pub fn pbs_reflection(self) -> Complex64 {
        match self {
            ReflectionConvention::PhaseI => Complex64::new(0.0, 1.0),
            ReflectionConvention::RealPbs => Complex64::new(1.0, 0.0),
        }
    }
}

/// One linear optical element, with its port(s) and parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OpticalElement {
    /// Non-polarizing splitter across two ports.
    BeamSplitter { ports: [Path; 2], reflectivity: f64 },
    /// Polarizing splitter: H transmits on each port, V swaps ports.
    PolarizingSplitter { ports: [Path; 2] },
    /// Half-wave plate at `angle_rad` from the H axis.
    HalfWavePlate { port: Path, angle_rad: f64 },
    /// Quarter-wave plate at `angle_rad` from the H axis.
    QuarterWavePlate { port: Path, angle_rad: f64 },
    /// Retarder `diag(1, e^{i delta})` acting on the V component.
    Retarder { port: Path, phase_rad: f64 },
    /// Path delay; adds `delay_ns` to the arrival time of photons on `port`.
    Delay { port: Path, delay_ns: f64 },
    /// Path phase `e^{i phi}` on both polarizations.
    PhaseShift { port: Path, phase_rad: f64 },
    /// Scalar transmittance; multiplies amplitudes by `sqrt(transmittance)`.
    Loss { port: Path, transmittance: f64 },
}

impl OpticalElement {
    pub fn ports(&self) -> &[Path] {
        match self {
            OpticalElement::BeamSplitter { ports, .. }
            | OpticalElement::PolarizingSplitter { ports } => ports,
            OpticalElement::HalfWavePlate { port, .. }
            | OpticalElement::QuarterWavePlate { port, .. }
            | OpticalElement::Retarder { port, .. }
            | OpticalElement::Delay { port, .. }
            | OpticalElement::PhaseShift { port, .. }
            | OpticalElement::Loss { port, .. } => std::slice::from_ref(port),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OpticalElement::BeamSplitter {
                ports,
                reflectivity,
            } => {
                if ports[0] == ports[1] {
                    return Err(Error::Configuration(
                        "beam splitter ports must be distinct".into(),
                    ));
                }
                if !(0.0..=1.0).contains(reflectivity) {
                    return Err(Error::Configuration(format!(
                        "beam splitter reflectivity must lie in [0, 1], got {reflectivity}"
                    )));
                }
            }
            OpticalElement::PolarizingSplitter { ports } => {
                if ports[0] == ports[1] {
                    return Err(Error::Configuration(
                        "polarizing splitter ports must be distinct".into(),
                    ));
                }
            }
            OpticalElement::Loss { transmittance, .. } => {
                if !(0.0..=1.0).contains(transmittance) {
                    return Err(Error::Configuration(format!(
                        "transmittance must lie in [0, 1], got {transmittance}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_unitary_kind(&self) -> bool {
        !matches!(self, OpticalElement::Loss { .. })
    }
}

/// Jones matrix of a half-wave plate at `angle` from the H axis.
pub fn jones_hwp(angle_rad: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = (2.0 * angle_rad).sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(-c, 0.0)],
    ]
}

/// Jones matrix of a quarter-wave plate at `angle` from the H axis.
pub fn jones_qwp(angle_rad: f64) -> [[Complex64; 2]; 2] {
    let (s, c) = angle_rad.sin_cos();
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    // R(t) diag(1, i) R(-t)
    [
        [one * c * c + i * s * s, (one - i) * s * c],
        [(one - i) * s * c, one * s * s + i * c * c],
    ]
}

/// Jones matrix of a retarder `diag(1, e^{i delta})`.
pub fn jones_retarder(phase_rad: f64) -> [[Complex64; 2]; 2] {
    [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, phase_rad)],
    ]
}

/// Single-photon transformation of one element over `(path, pol)` labels.
///
/// Time is handled separately: `time_shift` applies after the linear map.
#[derive(Clone, Debug)]
pub struct ModeTransform {
    /// Sorted input labels this element acts on.
    inputs: Vec<(Path, Pol)>,
    /// Rows of the linear map, parallel to `inputs`.
    rows: Vec<Vec<((Path, Pol), Complex64)>>,
    /// Per-path arrival-time shifts in ns.
    time_shift: Vec<(Path, f64)>,
}

impl ModeTransform {
    fn identity() -> Self {
        ModeTransform {
            inputs: Vec::new(),
            rows: Vec::new(),
            time_shift: Vec::new(),
        }
    }

    fn push(&mut self, input: (Path, Pol), outputs: Vec<((Path, Pol), Complex64)>) {
        self.inputs.push(input);
        self.rows.push(outputs);
    }

    /// Output contributions for one mode label.
    pub fn apply_label(&self, m: &ModeLabel) -> Vec<(ModeLabel, Complex64)> {
        let mut out = match self.inputs.iter().position(|i| *i == (m.path, m.pol)) {
            None => vec![(*m, Complex64::new(1.0, 0.0))],
            Some(idx) => self.rows[idx]
                .iter()
                .map(|((path, pol), amp)| (ModeLabel::new(*path, *pol, m.time_ns), *amp))
                .collect(),
        };
        for (label, _) in out.iter_mut() {
            if let Some((_, dt)) = self.time_shift.iter().find(|(p, _)| *p == label.path) {
                *label = ModeLabel::new(label.path, label.pol, label.time_ns + dt);
            }
        }
        out
    }

    /// Dense matrix over the element's own `(port, pol)` space, for unitarity
    /// checks. Returns `(labels, matrix)` with `matrix[out][in]`.
    pub fn matrix(&self) -> (Vec<(Path, Pol)>, Vec<Vec<Complex64>>) {
        let mut labels: Vec<(Path, Pol)> = self.inputs.clone();
        for row in &self.rows {
            for ((p, pol), _) in row {
                if !labels.contains(&(*p, *pol)) {
                    labels.push((*p, *pol));
                }
            }
        }
        labels.sort();
        let dim = labels.len();
        let mut mat = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        for (i, input) in self.inputs.iter().enumerate() {
            let col = labels.iter().position(|l| l == input).unwrap();
            for ((p, pol), amp) in &self.rows[i] {
                let row = labels.iter().position(|l| l == &(*p, *pol)).unwrap();
                mat[row][col] = *amp;
            }
        }
        (labels, mat)
    }

    /// Checks `U U^dagger = I` within `tol` on the element's span.
    pub fn is_unitary(&self, tol: f64) -> bool {
        let (_, m) = self.matrix();
        let dim = m.len();
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..dim {
                    acc += m[i][k] * m[j][k].conj();
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                if (acc - expected).norm() > tol {
                    return false;
                }
            }
        }
        true
    }
}

/// The single-photon mode map of `element` under `convention`.
pub fn element_transform(
    element: &OpticalElement,
    convention: ReflectionConvention,
) -> Result<ModeTransform> {
    element.validate()?;
    let mut t = ModeTransform::identity();
    let i = Complex64::new(0.0, 1.0);
    match element {
        OpticalElement::BeamSplitter {
            ports: [a, b],
            reflectivity,
        } => {
            let tr = Complex64::new((1.0 - reflectivity).sqrt(), 0.0);
            let rf = i * reflectivity.sqrt();
            for pol in [Pol::H, Pol::V] {
                t.push((*a, pol), vec![((*a, pol), tr), ((*b, pol), rf)]);
                t.push((*b, pol), vec![((*b, pol), tr), ((*a, pol), rf)]);
            }
        }
        OpticalElement::PolarizingSplitter { ports: [a, b] } => {
            let one = Complex64::new(1.0, 0.0);
            let r = convention.pbs_reflection();
            t.push((*a, Pol::H), vec![((*a, Pol::H), one)]);
            t.push((*b, Pol::H), vec![((*b, Pol::H), one)]);
            t.push((*a, Pol::V), vec![((*b, Pol::V), r)]);
            t.push((*b, Pol::V), vec![((*a, Pol::V), r)]);
        }
        OpticalElement::HalfWavePlate { port, angle_rad } => {
            push_jones(&mut t, *port, jones_hwp(*angle_rad));
        }
        OpticalElement::QuarterWavePlate { port, angle_rad } => {
            push_jones(&mut t, *port, jones_qwp(*angle_rad));
        }
        OpticalElement::Retarder { port, phase_rad } => {
            push_jones(&mut t, *port, jones_retarder(*phase_rad));
        }
        OpticalElement::Delay { port, delay_ns } => {
            t.time_shift.push((*port, *delay_ns));
        }
        OpticalElement::PhaseShift { port, phase_rad } => {
            let p = Complex64::from_polar(1.0, *phase_rad);
            for pol in [Pol::H, Pol::V] {
                t.push((*port, pol), vec![((*port, pol), p)]);
            }
        }
        OpticalElement::Loss {
            port,
            transmittance,
        } => {
            let amp = Complex64::new(transmittance.sqrt(), 0.0);
            for pol in [Pol::H, Pol::V] {
                t.push((*port, pol), vec![((*port, pol), amp)]);
            }
        }
    }
    Ok(t)
}

fn push_jones(t: &mut ModeTransform, port: Path, jones: [[Complex64; 2]; 2]) {
    // jones[out][in] over (H, V)
    for (col, pol_in) in [Pol::H, Pol::V].into_iter().enumerate() {
        let mut outs = Vec::with_capacity(2);
        for (row, pol_out) in [Pol::H, Pol::V].into_iter().enumerate() {
            let amp = jones[row][col];
            if amp.norm() > 0.0 {
                outs.push(((port, pol_out), amp));
            }
        }
        t.push((port, pol_in), outs);
    }
}

/// Applies one element to every photon of every ket independently.
pub fn apply_element(
    state: &PhotonicState,
    element: &OpticalElement,
    convention: ReflectionConvention,
) -> Result<PhotonicState> {
    let transform = element_transform(element, convention)?;
    apply_transform(state, &transform)
}

/// Applies a prebuilt mode transform (expand, canonicalize, prune).
pub fn apply_transform(state: &PhotonicState, t: &ModeTransform) -> Result<PhotonicState> {
    state.transform(|ket, amp| {
        let per_photon: Vec<Vec<(ModeLabel, Complex64)>> =
            ket.modes().iter().map(|m| t.apply_label(m)).collect();
        let mut out: Vec<(BasisKet, Complex64)> = Vec::new();
        match per_photon.as_slice() {
            [one] => {
                for (m, a) in one {
                    out.push((BasisKet::single(*m), amp * a));
                }
            }
            [first, second] => {
                for (m0, a0) in first {
                    for (m1, a1) in second {
                        out.push((BasisKet::pair(*m0, *m1), amp * a0 * a1));
                    }
                }
            }
            _ => unreachable!("kets hold 1 or 2 photons"),
        }
        out
    })
}

/// An ordered element list over a declared path set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub paths: Vec<Path>,
    pub elements: Vec<OpticalElement>,
}

impl Circuit {
    pub fn new(paths: impl IntoIterator<Item = Path>) -> Self {
        let mut paths: Vec<Path> = paths.into_iter().collect();
        paths.sort();
        paths.dedup();
        Circuit {
            paths,
            elements: Vec::new(),
        }
    }

    pub fn push(&mut self, element: OpticalElement) -> Result<&mut Self> {
        element.validate()?;
        for port in element.ports() {
            if !self.paths.contains(port) {
                return Err(Error::Configuration(format!(
                    "element references undeclared path `{port}`"
                )));
            }
        }
        self.elements.push(element);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.elements {
            e.validate()?;
            for port in e.ports() {
                if !self.paths.contains(port) {
                    return Err(Error::Configuration(format!(
                        "element references undeclared path `{port}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Left-to-right fold of `apply_element` over the circuit.
pub fn apply_circuit(
    state: &PhotonicState,
    circuit: &Circuit,
    convention: ReflectionConvention,
) -> Result<PhotonicState> {
    circuit.validate()?;
    for path in state.occupied_paths() {
        if !circuit.paths.contains(&path) {
            return Err(Error::Configuration(format!(
                "state occupies path `{path}` not declared by the circuit"
            )));
        }
    }
    let mut current = state.clone();
    for element in &circuit.elements {
        current = apply_element(&current, element, convention)?;
    }
    Ok(current)
}
