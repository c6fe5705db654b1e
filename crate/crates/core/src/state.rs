//! Few-photon pure states over labeled optical modes.
//!
//! A mode label is a `(path, polarization, arrival time)` triple; a basis ket
//! is a canonically ordered multiset of one or two labels; a state is a sparse
//! map from kets to complex amplitudes. Arrival times are continuous, so kets
//! with nearby times are *not* orthogonal: all physical norms and detection
//! probabilities go through the Gram form built from [`OverlapKernel`], which
//! models the photons' finite coherence length and their mutual mode mismatch.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::ser::{SerializeMap, SerializeSeq, SerializeStruct};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Speed of light in micrometers per nanosecond (299.792458 um/ps).
pub const SPEED_OF_LIGHT_UM_PER_NS: f64 = 299_792.458;

/// Amplitudes below this magnitude are dropped from sparse states.
pub const PRUNE_EPS: f64 = 1e-15;

/// Symbolic path identifier for an optical beam line.
///
/// `PortA`/`PortM` are the sender-side beamsplitter ports, `ChannelH`/`ChannelV`
/// the dual-rail fibers, `Merged` the receiver beam after recombination,
/// `ArmS`/`ArmL` the interferometer arms, `OutX`/`OutY` the detector modes.
/// `Hold` is a local mode that bypasses the channel (used for entangled-input
/// checks); `Aux0`/`Aux1` are free labels for tests and custom circuits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Path {
    PortA,
    PortM,
    ChannelH,
    ChannelV,
    Merged,
    ArmS,
    ArmL,
    OutX,
    OutY,
    Hold,
    Aux0,
    Aux1,
}

impl Path {
    pub fn as_str(&self) -> &'static str {
        match self {
            Path::PortA => "A",
            Path::PortM => "M",
            Path::ChannelH => "CH",
            Path::ChannelV => "CV",
            Path::Merged => "B",
            Path::ArmS => "S",
            Path::ArmL => "L",
            Path::OutX => "X",
            Path::OutY => "Y",
            Path::Hold => "R",
            Path::Aux0 => "AUX0",
            Path::Aux1 => "AUX1",
        }
    }
}

impl std::str::FromStr for Path {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "A" => Path::PortA,
            "M" => Path::PortM,
            "CH" => Path::ChannelH,
            "CV" => Path::ChannelV,
            "B" => Path::Merged,
            "S" => Path::ArmS,
            "L" => Path::ArmL,
            "X" => Path::OutX,
            "Y" => Path::OutY,
            "R" => Path::Hold,
            "AUX0" => Path::Aux0,
            "AUX1" => Path::Aux1,
            other => return Err(Error::Configuration(format!("unknown path `{other}`"))),
        })
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Path {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Path {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Photon polarization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pol {
    H,
    V,
}

impl Pol {
    pub fn index(self) -> usize {
        match self {
            Pol::H => 0,
            Pol::V => 1,
        }
    }

    pub fn flipped(self) -> Pol {
        match self {
            Pol::H => Pol::V,
            Pol::V => Pol::H,
        }
    }
}

impl fmt::Display for Pol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pol::H => "H",
            Pol::V => "V",
        })
    }
}

impl Serialize for Pol {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(match self {
            Pol::H => "H",
            Pol::V => "V",
        })
    }
}

/// One photon's mode: path, polarization and arrival-time offset in ns.
///
/// Canonical ket keys compare times by exact bit pattern; physical overlap of
/// nearby times is handled only through [`OverlapKernel`], never by a
/// tolerance on the key.
#[derive(Clone, Copy, Debug)]
pub struct ModeLabel {
    pub path: Path,
    pub pol: Pol,
    pub time_ns: f64,
}

impl ModeLabel {
    pub fn new(path: Path, pol: Pol, time_ns: f64) -> Self {
        assert!(time_ns.is_finite(), "mode arrival time must be finite");
        ModeLabel { path, pol, time_ns }
    }

}

impl PartialEq for ModeLabel {
    fn eq(&self, other: &Self) -> bool {
        self.path == other.path
            && self.pol == other.pol
            && self.time_ns.to_bits() == other.time_ns.to_bits()
    }
}
impl Eq for ModeLabel {}
impl PartialOrd for ModeLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ModeLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.path, self.pol)
            .cmp(&(other.path, other.pol))
            .then_with(|| self.time_ns.total_cmp(&other.time_ns))
    }
}
impl std::hash::Hash for ModeLabel {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        (self.path, self.pol, self.time_ns.to_bits()).hash(state);
    }
}

impl Serialize for ModeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ModeLabel", 3)?;
        st.serialize_field("path", &self.path)?;
        st.serialize_field("pol", &self.pol)?;
        st.serialize_field("t_ns", &self.time_ns)?;
        st.end()
    }
}

/// A canonically ordered multiset of one or two mode labels.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisKet {
    n: u8,
    modes: [ModeLabel; 2],
}

impl BasisKet {
    pub fn single(mode: ModeLabel) -> Self {
        BasisKet {
            n: 1,
            modes: [mode, mode],
        }
    }

    pub fn pair(a: ModeLabel, b: ModeLabel) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        BasisKet {
            n: 2,
            modes: [lo, hi],
        }
    }

    /// Builds a ket from a mode list, rejecting more than two photons.
    pub fn new(modes: &[ModeLabel]) -> Result<Self> {
        match modes {
            [m] => Ok(BasisKet::single(*m)),
            [a, b] => Ok(BasisKet::pair(*a, *b)),
            [] => Err(Error::Validation("empty mode list".into())),
            _ => Err(Error::Capacity(format!(
                "kets hold at most 2 photons, got {}",
                modes.len()
            ))),
        }
    }

    pub fn photon_count(&self) -> u8 {
        self.n
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes[..self.n as usize]
    }

    /// The mode occupying `path`, if exactly one photon sits there.
    pub fn mode_on(&self, path: Path) -> Option<ModeLabel> {
        let mut found = None;
        for m in self.modes() {
            if m.path == path {
                if found.is_some() {
                    return None;
                }
                found = Some(*m);
            }
        }
        found
    }

    /// Number of photons on `path`.
    pub fn count_on(&self, path: Path) -> usize {
        self.modes().iter().filter(|m| m.path == path).count()
    }
}

impl fmt::Debug for BasisKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, m) in self.modes().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}@{}", m.path, m.pol, m.time_ns)?;
        }
        write!(f, ">")
    }
}

impl Serialize for BasisKet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.n as usize))?;
        for m in self.modes() {
            seq.serialize_element(m)?;
        }
        seq.end()
    }
}

/// Normalized polarization amplitude pair `alpha |H> + beta |V>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JonesVector {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl JonesVector {
    pub const NORM_TOL: f64 = 1e-12;

    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::Validation(format!(
                "polarization state not normalized: |alpha|^2+|beta|^2 = {norm}"
            )));
        }
        Ok(JonesVector { alpha, beta })
    }

    /// Normalizes an arbitrary nonzero amplitude pair.
    pub fn normalized(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if norm < 1e-15 {
            return Err(Error::Validation("zero polarization vector".into()));
        }
        Ok(JonesVector {
            alpha: alpha / norm,
            beta: beta / norm,
        })
    }

    pub fn horizontal() -> Self {
        JonesVector {
            alpha: Complex64::new(1.0, 0.0),
            beta: Complex64::new(0.0, 0.0),
        }
    }

    pub fn vertical() -> Self {
        JonesVector {
            alpha: Complex64::new(0.0, 0.0),
            beta: Complex64::new(1.0, 0.0),
        }
    }

    /// |D> = (|H> + |V>)/sqrt(2).
    pub fn diagonal() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        JonesVector {
            alpha: Complex64::new(r, 0.0),
            beta: Complex64::new(r, 0.0),
        }
    }

    /// |D-bar> = (|H> - |V>)/sqrt(2).
    pub fn antidiagonal() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        JonesVector {
            alpha: Complex64::new(r, 0.0),
            beta: Complex64::new(-r, 0.0),
        }
    }

    /// |L> = (|H> + i|V>)/sqrt(2).
    pub fn circular_l() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        JonesVector {
            alpha: Complex64::new(r, 0.0),
            beta: Complex64::new(0.0, r),
        }
    }

    /// |R> = (|H> - i|V>)/sqrt(2).
    pub fn circular_r() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        JonesVector {
            alpha: Complex64::new(r, 0.0),
            beta: Complex64::new(0.0, -r),
        }
    }

    pub fn component(&self, pol: Pol) -> Complex64 {
        match pol {
            Pol::H => self.alpha,
            Pol::V => self.beta,
        }
    }

    /// Inner product `<self|other>`.
    pub fn overlap(&self, other: &JonesVector) -> Complex64 {
        self.alpha.conj() * other.alpha + self.beta.conj() * other.beta
    }

    /// Haar-uniform pure qubit state.
    pub fn random_haar(rng: &mut impl rand::Rng) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        loop {
            let a = Complex64::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            let b = Complex64::new(
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            );
            if let Ok(v) = JonesVector::normalized(a, b) {
                return v;
            }
        }
    }
}

/// Temporal-mode overlap kernel with a lumped pair-distinguishability factor.
///
/// `envelope(dt)` is the unit-amplitude Gaussian single-photon overlap chosen
/// so that the *two-photon* fringe envelope (the product of two envelopes) has
/// FWHM equal to `coherence_length_um` in optical path difference.
/// `overlap(dt) = v_m * envelope(dt)` is the mutual overlap of the photon
/// pair; its zero-delay value is the distinguishability `v_m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OverlapKernel {
    pub coherence_length_um: f64,
    pub distinguishability: f64,
}

impl OverlapKernel {
    pub fn new(coherence_length_um: f64, distinguishability: f64) -> Result<Self> {
        if !(coherence_length_um > 0.0) || !coherence_length_um.is_finite() {
            return Err(Error::Validation(format!(
                "coherence length must be positive, got {coherence_length_um}"
            )));
        }
        if !(0.0..=1.0).contains(&distinguishability) {
            return Err(Error::Validation(format!(
                "distinguishability must lie in [0, 1], got {distinguishability}"
            )));
        }
        Ok(OverlapKernel {
            coherence_length_um,
            distinguishability,
        })
    }

    /// Defaults match the apparatus scale: l_c = 75 um, v_m = 1.
    pub fn ideal() -> Self {
        OverlapKernel {
            coherence_length_um: 75.0,
            distinguishability: 1.0,
        }
    }

    /// Unit-amplitude Gaussian envelope over a time gap in ns.
    ///
    /// envelope(dt) = exp(-(4 ln 2) x^2 / (sqrt(2) l_c)^2) with x = c dt, so
    /// envelope(dt)^2 has FWHM l_c in x.
    pub fn envelope(&self, dt_ns: f64) -> f64 {
        let x = SPEED_OF_LIGHT_UM_PER_NS * dt_ns;
        let w = std::f64::consts::SQRT_2 * self.coherence_length_um;
        (-4.0 * std::f64::consts::LN_2 * (x / w) * (x / w)).exp()
    }

    /// Mutual overlap of the photon pair at time gap `dt_ns`; O(0) = v_m.
    pub fn overlap(&self, dt_ns: f64) -> f64 {
        self.distinguishability * self.envelope(dt_ns)
    }

    /// Envelope between two labels; zero when path or polarization differ.
    pub fn mode_envelope(&self, a: &ModeLabel, b: &ModeLabel) -> f64 {
        if a.path == b.path && a.pol == b.pol {
            self.envelope(a.time_ns - b.time_ns)
        } else {
            0.0
        }
    }

    /// Mismatch damping applied once per cross term between distinct kets of
    /// an n-photon state. A single photon interferes with itself without any
    /// mode mismatch; a two-photon cross term is damped once by v_m.
    pub fn cross_factor(&self, photons: u8) -> f64 {
        match photons {
            0 | 1 => 1.0,
            _ => self.distinguishability,
        }
    }

    /// Gram matrix entry between two kets of the same photon number.
    ///
    /// Diagonal entries are exactly 1 (kets are implicitly normalized).
    /// Off-diagonal entries take the permanent of the per-photon envelope
    /// overlaps, normalized by the kets' own bunching factors, then damped
    /// once by the pair mismatch.
    pub fn gram_entry(&self, k: &BasisKet, l: &BasisKet) -> f64 {
        debug_assert_eq!(k.photon_count(), l.photon_count());
        if k == l {
            return 1.0;
        }
        let raw = match (k.modes(), l.modes()) {
            ([a], [b]) => self.mode_envelope(a, b),
            ([a0, a1], [b0, b1]) => {
                let perm = self.mode_envelope(a0, b0) * self.mode_envelope(a1, b1)
                    + self.mode_envelope(a0, b1) * self.mode_envelope(a1, b0);
                let norm_k = 1.0 + self.mode_envelope(a0, a1).powi(2);
                let norm_l = 1.0 + self.mode_envelope(b0, b1).powi(2);
                perm / (norm_k * norm_l).sqrt()
            }
            _ => unreachable!("kets hold 1 or 2 photons"),
        };
        self.cross_factor(k.photon_count()) * raw
    }
}

/// Sparse superposition of basis kets with a fixed photon number.
///
/// Squared norms are computed through the Gram form (`gram_norm`); the plain
/// amplitude sum `plain_norm_sqr` agrees with it whenever all kets are
/// mutually orthogonal. Values are immutable after construction.
#[derive(Clone, PartialEq)]
pub struct PhotonicState {
    terms: BTreeMap<BasisKet, Complex64>,
    photons: u8,
}

impl PhotonicState {
    /// Builds a state from `(ket, amplitude)` terms, merging duplicates and
    /// pruning magnitudes below [`PRUNE_EPS`].
    pub fn from_terms<I>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (BasisKet, Complex64)>,
    {
        let mut map: BTreeMap<BasisKet, Complex64> = BTreeMap::new();
        let mut photons: Option<u8> = None;
        for (ket, amp) in terms {
            match photons {
                None => photons = Some(ket.photon_count()),
                Some(n) if n != ket.photon_count() => {
                    return Err(Error::Validation(format!(
                        "mixed photon counts in one state: {} vs {}",
                        n,
                        ket.photon_count()
                    )))
                }
                _ => {}
            }
            *map.entry(ket).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        map.retain(|_, a| a.norm() >= PRUNE_EPS);
        let photons = photons.ok_or_else(|| Error::Validation("empty state".into()))?;
        if map.is_empty() {
            return Err(Error::Validation(
                "state vanished after pruning (zero state)".into(),
            ));
        }
        Ok(PhotonicState {
            terms: map,
            photons,
        })
    }

    /// One photon in polarization state `pol_state` on `path` at `time_ns`.
    pub fn single_photon(pol_state: &JonesVector, path: Path, time_ns: f64) -> Result<Self> {
        // re-validate: JonesVector is normalized by construction, but the
        // contract belongs to this operation too
        let v = JonesVector::new(pol_state.alpha, pol_state.beta)?;
        PhotonicState::from_terms([
            (
                BasisKet::single(ModeLabel::new(path, Pol::H, time_ns)),
                v.alpha,
            ),
            (
                BasisKet::single(ModeLabel::new(path, Pol::V, time_ns)),
                v.beta,
            ),
        ])
    }

    /// Tensor product; total photon number must not exceed two.
    pub fn tensor(a: &PhotonicState, b: &PhotonicState) -> Result<Self> {
        let total = a.photons + b.photons;
        if total > 2 {
            return Err(Error::Capacity(format!(
                "tensor product would hold {total} photons (max 2)"
            )));
        }
        let mut terms = Vec::with_capacity(a.terms.len() * b.terms.len());
        for (ka, aa) in &a.terms {
            for (kb, ab) in &b.terms {
                let mut modes = Vec::with_capacity(total as usize);
                modes.extend_from_slice(ka.modes());
                modes.extend_from_slice(kb.modes());
                terms.push((BasisKet::new(&modes)?, aa * ab));
            }
        }
        PhotonicState::from_terms(terms)
    }

    pub fn photon_count(&self) -> u8 {
        self.photons
    }

    pub fn terms(&self) -> impl Iterator<Item = (&BasisKet, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, ket: &BasisKet) -> Complex64 {
        self.terms
            .get(ket)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Plain amplitude-squared sum; equals `gram_norm` for orthogonal kets.
    pub fn plain_norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Squared norm under the Gram form of `kernel`.
    pub fn gram_norm(&self, kernel: &OverlapKernel) -> f64 {
        let kets: Vec<(&BasisKet, &Complex64)> = self.terms.iter().collect();
        let mut total = 0.0;
        for (i, (k, a)) in kets.iter().enumerate() {
            total += a.norm_sqr();
            for (l, b) in kets.iter().skip(i + 1) {
                let g = kernel.gram_entry(k, l);
                if g != 0.0 {
                    total += 2.0 * (*a * b.conj()).re * g;
                }
            }
        }
        total
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Result<Self> {
        PhotonicState::from_terms(self.terms.iter().map(|(k, a)| (*k, a * factor)))
    }

    /// Superposition of two states with the same photon number.
    pub fn add(&self, other: &PhotonicState) -> Result<Self> {
        if self.photons != other.photons {
            return Err(Error::Validation(
                "cannot superpose states with different photon numbers".into(),
            ));
        }
        PhotonicState::from_terms(
            self.terms
                .iter()
                .chain(other.terms.iter())
                .map(|(k, a)| (*k, *a)),
        )
    }

    /// Rebuilds the state by expanding each ket through `f`.
    ///
    /// `f` maps one ket to a list of `(ket, amplitude factor)` contributions;
    /// results are canonically merged and pruned. The zero state (everything
    /// pruned) is reported as an error by `from_terms`.
    pub fn transform<F, I>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&BasisKet, Complex64) -> I,
        I: IntoIterator<Item = (BasisKet, Complex64)>,
    {
        let mut out = Vec::new();
        for (ket, amp) in &self.terms {
            out.extend(f(ket, *amp));
        }
        PhotonicState::from_terms(out)
    }

    /// Keeps only the kets satisfying `pred`; `None` if nothing survives.
    pub fn filtered<F>(&self, mut pred: F) -> Option<Self>
    where
        F: FnMut(&BasisKet) -> bool,
    {
        let kept: Vec<_> = self
            .terms
            .iter()
            .filter(|(k, _)| pred(k))
            .map(|(k, a)| (*k, *a))
            .collect();
        if kept.is_empty() {
            None
        } else {
            PhotonicState::from_terms(kept).ok()
        }
    }

    /// The set of paths occupied by any photon of any ket.
    pub fn occupied_paths(&self) -> Vec<Path> {
        let mut paths: Vec<Path> = self
            .terms
            .keys()
            .flat_map(|k| k.modes().iter().map(|m| m.path))
            .collect();
        paths.sort();
        paths.dedup();
        paths
    }

    /// Renames `from` to `to` on every mode label.
    pub fn relabeled(&self, from: Path, to: Path) -> Result<Self> {
        self.transform(|ket, amp| {
            let modes: Vec<ModeLabel> = ket
                .modes()
                .iter()
                .map(|m| {
                    if m.path == from {
                        ModeLabel::new(to, m.pol, m.time_ns)
                    } else {
                        *m
                    }
                })
                .collect();
            [(BasisKet::new(&modes).expect("photon count preserved"), amp)]
        })
    }

    /// True when the two states agree term-by-term within `tol`, allowing a
    /// global phase on `other`.
    pub fn approx_eq_up_to_phase(&self, other: &PhotonicState, tol: f64) -> bool {
        if self.photons != other.photons || self.terms.len() != other.terms.len() {
            return false;
        }
        // phase reference: largest own amplitude
        let (k0, a0) = match self
            .terms
            .iter()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        {
            Some(x) => x,
            None => return false,
        };
        let b0 = other.amplitude(k0);
        if b0.norm() < tol {
            return false;
        }
        let phase = a0 / b0;
        let phase = phase / phase.norm();
        self.terms
            .iter()
            .all(|(k, a)| (a - phase * other.amplitude(k)).norm() <= tol)
    }

    /// Term-by-term comparison within `tol`, no phase freedom.
    pub fn approx_eq(&self, other: &PhotonicState, tol: f64) -> bool {
        if self.photons != other.photons || self.terms.len() != other.terms.len() {
            return false;
        }
        self.terms
            .iter()
            .all(|(k, a)| (a - other.amplitude(k)).norm() <= tol)
    }
}

impl fmt::Debug for PhotonicState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "PhotonicState({} photons)", self.photons)?;
        for (k, a) in &self.terms {
            writeln!(f, "  {:?}  {:+.6}{:+.6}i", k, a.re, a.im)?;
        }
        Ok(())
    }
}

impl Serialize for PhotonicState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Term<'a> {
            modes: &'a BasisKet,
            amplitude: [f64; 2],
        }
        let mut map = s.serialize_map(Some(2))?;
        map.serialize_entry("photons", &self.photons)?;
        let terms: Vec<Term> = self
            .terms
            .iter()
            .map(|(k, a)| Term {
                modes: k,
                amplitude: [a.re, a.im],
            })
            .collect();
        map.serialize_entry("terms", &terms)?;
        map.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_photon_basis_state() {
        let s = PhotonicState::single_photon(&JonesVector::horizontal(), Path::Aux0, 0.0).unwrap();
        assert_eq!(s.len(), 1);
        let ket = BasisKet::single(ModeLabel::new(Path::Aux0, Pol::H, 0.0));
        assert_eq!(s.amplitude(&ket), c(1.0, 0.0));
    }

    #[test]
    fn single_photon_diagonal() {
        let s = PhotonicState::single_photon(&JonesVector::diagonal(), Path::Aux0, 0.0).unwrap();
        assert_eq!(s.len(), 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for pol in [Pol::H, Pol::V] {
            let ket = BasisKet::single(ModeLabel::new(Path::Aux0, pol, 0.0));
            assert!((s.amplitude(&ket) - c(r, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn single_photon_circular() {
        let s = PhotonicState::single_photon(&JonesVector::circular_l(), Path::Aux0, 0.0).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let kv = BasisKet::single(ModeLabel::new(Path::Aux0, Pol::V, 0.0));
        assert!((s.amplitude(&kv) - c(0.0, r)).norm() < 1e-15);
    }

    #[test]
    fn non_normalized_input_rejected() {
        let bad = JonesVector {
            alpha: c(1.0, 0.0),
            beta: c(0.5, 0.0),
        };
        assert!(matches!(
            PhotonicState::single_photon(&bad, Path::Aux0, 0.0),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn tensor_builds_four_term_pair_state() {
        let reference =
            PhotonicState::single_photon(&JonesVector::diagonal(), Path::PortA, 0.0).unwrap();
        let signal =
            PhotonicState::single_photon(&JonesVector::diagonal(), Path::PortA, 3.0).unwrap();
        let joint = PhotonicState::tensor(&reference, &signal).unwrap();
        assert_eq!(joint.photon_count(), 2);
        assert_eq!(joint.len(), 4);
        for (_, a) in joint.terms() {
            assert!((a.norm() - 0.5).abs() < 1e-15);
        }
        assert!((joint.plain_norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_capacity_overflow() {
        let one = PhotonicState::single_photon(&JonesVector::horizontal(), Path::Aux0, 0.0).unwrap();
        let two = PhotonicState::tensor(&one, &one).unwrap();
        assert!(matches!(
            PhotonicState::tensor(&two, &one),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn empty_state_rejected() {
        assert!(matches!(
            PhotonicState::from_terms(std::iter::empty()),
            Err(Error::Validation(_))
        ));
        // all-pruned counts as the zero state
        let ket = BasisKet::single(ModeLabel::new(Path::Aux0, Pol::H, 0.0));
        assert!(PhotonicState::from_terms([(ket, c(1e-18, 0.0))]).is_err());
    }

    #[test]
    fn canonicalization_merges_permuted_pairs() {
        let a = ModeLabel::new(Path::Aux0, Pol::H, 0.0);
        let b = ModeLabel::new(Path::Aux1, Pol::V, 3.0);
        assert_eq!(BasisKet::pair(a, b), BasisKet::pair(b, a));
        let s = PhotonicState::from_terms([
            (BasisKet::pair(a, b), c(0.5, 0.0)),
            (BasisKet::pair(b, a), c(0.5, 0.0)),
        ])
        .unwrap();
        assert_eq!(s.len(), 1);
        assert!((s.amplitude(&BasisKet::pair(a, b)) - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn kernel_contract() {
        let k = OverlapKernel::new(75.0, 0.7).unwrap();
        assert!((k.overlap(0.0) - 0.7).abs() < 1e-15);
        assert!(k.overlap(1.0) < 1e-300); // 1 ns >> coherence time
        assert!((k.overlap(2e-5) - k.overlap(-2e-5)).abs() < 1e-15);
        // envelope^2 reaches 1/2 at x = l_c/2
        let dt = 37.5 / SPEED_OF_LIGHT_UM_PER_NS;
        let env2 = k.envelope(dt) * k.envelope(dt);
        assert!((env2 - 0.5).abs() < 1e-12);
        assert!(OverlapKernel::new(75.0, 1.3).is_err());
        assert!(OverlapKernel::new(0.0, 0.5).is_err());
    }

    #[test]
    fn gram_orthogonal_pols_add_incoherently() {
        let s = PhotonicState::from_terms([
            (
                BasisKet::single(ModeLabel::new(Path::Aux0, Pol::H, 0.0)),
                c(0.6, 0.0),
            ),
            (
                BasisKet::single(ModeLabel::new(Path::Aux0, Pol::V, 0.0)),
                c(0.0, 0.8),
            ),
        ])
        .unwrap();
        let k = OverlapKernel::ideal();
        assert!((s.gram_norm(&k) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn gram_same_mode_adds_coherently() {
        // same (path, pol), same time, v_m = 1: |a1 + a2|^2
        let ket_time = |t: f64| BasisKet::single(ModeLabel::new(Path::Aux0, Pol::H, t));
        // distinct keys via distinct times within full coherence
        let s = PhotonicState::from_terms([
            (ket_time(0.0), c(0.3, 0.0)),
            (ket_time(1e-12), c(0.4, 0.0)),
        ])
        .unwrap();
        let k = OverlapKernel::ideal();
        assert!((s.gram_norm(&k) - 0.49).abs() < 1e-9);
    }

    #[test]
    fn gram_of_prepared_pair_is_one_for_any_kernel() {
        // |D> (t=0) x signal (t=3ns): cross terms vanish by pol/time orthogonality
        let reference =
            PhotonicState::single_photon(&JonesVector::diagonal(), Path::PortA, 0.0).unwrap();
        let signal = PhotonicState::single_photon(
            &JonesVector::normalized(c(0.3, 0.4), c(0.5, -0.7)).unwrap(),
            Path::PortA,
            3.0,
        )
        .unwrap();
        let joint = PhotonicState::tensor(&reference, &signal).unwrap();
        for vm in [0.0, 0.3, 1.0] {
            let k = OverlapKernel::new(75.0, vm).unwrap();
            assert!((joint.gram_norm(&k) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn serializes_to_debug_json() {
        let s = PhotonicState::single_photon(&JonesVector::diagonal(), Path::ChannelH, 1.5).unwrap();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["photons"], 1);
        assert_eq!(json["terms"][0]["modes"][0]["path"], "CH");
        assert_eq!(json["terms"][0]["amplitude"][0], std::f64::consts::FRAC_1_SQRT_2);
    }

    fn arb_state(n_photons: u8) -> impl Strategy<Value = PhotonicState> {
        let mode = (0..4u8, 0..2u8, -2.0f64..2.0).prop_map(|(p, pol, t)| {
            let path = match p {
                0 => Path::Aux0,
                1 => Path::Aux1,
                2 => Path::OutX,
                _ => Path::OutY,
            };
            let pol = if pol == 0 { Pol::H } else { Pol::V };
            ModeLabel::new(path, pol, t)
        });
        let ket = prop::collection::vec(mode, n_photons as usize..=n_photons as usize)
            .prop_map(|ms| BasisKet::new(&ms).unwrap());
        let amp = (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| c(re, im));
        prop::collection::vec((ket, amp), 1..6).prop_filter_map("nonzero", |terms| {
            PhotonicState::from_terms(terms).ok()
        })
    }

    proptest! {
        #[test]
        fn gram_positive_semidefinite(s in arb_state(2), vm in 0.0f64..1.0) {
            let k = OverlapKernel::new(50.0, vm).unwrap();
            prop_assert!(s.gram_norm(&k) >= -1e-10);
        }

        #[test]
        fn gram_positive_semidefinite_single(s in arb_state(1), vm in 0.0f64..1.0) {
            let k = OverlapKernel::new(50.0, vm).unwrap();
            prop_assert!(s.gram_norm(&k) >= -1e-10);
        }

        #[test]
        fn gram_global_phase_invariant(s in arb_state(2), phase in 0.0f64..std::f64::consts::TAU) {
            let k = OverlapKernel::new(50.0, 0.8).unwrap();
            let rotated = s.scaled(Complex64::from_polar(1.0, phase)).unwrap();
            prop_assert!((s.gram_norm(&k) - rotated.gram_norm(&k)).abs() < 1e-10);
        }

        #[test]
        fn gram_invariant_under_time_shift_and_relabel(s in arb_state(2), dt in -5.0f64..5.0) {
            // shifting every time and swapping path names preserves all
            // pairwise (path, pol, dtime) relations
            let k = OverlapKernel::new(50.0, 0.6).unwrap();
            let moved = s.transform(|ket, amp| {
                let modes: Vec<ModeLabel> = ket.modes().iter().map(|m| {
                    let path = match m.path {
                        Path::Aux0 => Path::Aux1,
                        Path::Aux1 => Path::Aux0,
                        other => other,
                    };
                    ModeLabel::new(path, m.pol, m.time_ns + dt)
                }).collect();
                [(BasisKet::new(&modes).unwrap(), amp)]
            }).unwrap();
            prop_assert!((s.gram_norm(&k) - moved.gram_norm(&k)).abs() < 1e-10);
        }

        #[test]
        fn gram_reduces_to_plain_norm_when_times_far(amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..5)) {
            // all pairwise gaps exceed 10x the kernel width
            let k = OverlapKernel::new(75.0, 1.0).unwrap();
            let terms: Vec<(BasisKet, Complex64)> = amps.iter().enumerate().map(|(i, (re, im))| {
                (BasisKet::single(ModeLabel::new(Path::Aux0, Pol::H, i as f64)), c(*re, *im))
            }).collect();
            if let Ok(s) = PhotonicState::from_terms(terms) {
                prop_assert!((s.gram_norm(&k) - s.plain_norm_sqr()).abs() < 1e-12);
            }
        }
    }
}
