//! Random operator pairs `(A(ξ, ·), B(ξ, ·))`, their mean operators and zero
//! certificates.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::catalog::{make_atom, CatalogAtom};
use crate::domain::{project_intersection, DomainDescriptor, INTERSECTION_MAX_CYCLES, INTERSECTION_TOL};
use crate::error::{Error, Result};
use crate::operator::{DemipositivityFlag, OperatorAtom};
use crate::valueset::ValueSet;
use crate::{ensure_dim, ensure_finite};

const WEIGHT_TOL: f64 = 1e-12;

/// Gaussian linear-regression data: `a ~ N(0, scale² I)`,
/// `y = <a, x_true> + noise · ε`. Each integer key deterministically yields one
/// [`CatalogAtom::LinearRegression`] atom.
#[derive(Debug, Clone)]
pub struct DataSampler {
    x_true: DVector<f64>,
    scale: f64,
    noise: f64,
    seed: u64,
    mc_atoms: Vec<OperatorAtom>,
}

impl DataSampler {
    /// `mc_samples` keys `0..mc_samples` are used for every mean-operator
    /// estimate.
    pub fn new(x_true: DVector<f64>, scale: f64, noise: f64, seed: u64, mc_samples: usize) -> Result<Self> {
        ensure_finite(&x_true, "sampler ground truth")?;
        if !(scale.is_finite() && scale > 0.0 && noise.is_finite() && noise >= 0.0) {
            return Err(Error::Construction(format!("sampler needs scale > 0 and noise >= 0, got {scale}, {noise}")));
        }
        if mc_samples == 0 || x_true.is_empty() {
            return Err(Error::Construction("sampler needs a positive dimension and mc_samples >= 1".into()));
        }
        let mut s = DataSampler { x_true, scale, noise, seed, mc_atoms: Vec::new() };
        s.mc_atoms = (0..mc_samples as u64).map(|k| s.atom(k)).collect::<Result<_>>()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.x_true.len()
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_atoms.len()
    }

    /// The regression pair `(a, y)` for `key`.
    pub fn data(&self, key: u64) -> (DVector<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(key);
        let a = DVector::from_fn(self.dim(), |_, _| self.scale * rng.sample::<f64, _>(StandardNormal));
        let eps: f64 = rng.sample(StandardNormal);
        let y = a.dot(&self.x_true) + self.noise * eps;
        (a, y)
    }

    pub fn atom(&self, key: u64) -> Result<OperatorAtom> {
        let (features, target) = self.data(key);
        make_atom(&CatalogAtom::LinearRegression { features, target })
    }
}

/// Distribution of one side of the operator pair.
#[derive(Debug, Clone)]
pub enum Family {
    /// Finite mixture `Σ α_i δ_{A_i}`.
    Mixture(Vec<(f64, OperatorAtom)>),
    /// Parametric data family; only single-valued, full-domain atoms.
    Sampler(DataSampler),
}

impl Family {
    pub fn single(atom: OperatorAtom) -> Self {
        Family::Mixture(vec![(1.0, atom)])
    }

    /// Uniform mixture over `atoms`.
    pub fn uniform(atoms: Vec<OperatorAtom>) -> Self {
        let w = 1.0 / atoms.len().max(1) as f64;
        Family::Mixture(atoms.into_iter().map(|a| (w, a)).collect())
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Family::Mixture(atoms) => atoms.first().map(|(_, a)| a.dim()),
            Family::Sampler(s) => Some(s.dim()),
        }
    }

    /// Weighted atoms defining the mean operator: the mixture itself, or the
    /// Monte-Carlo atoms of a sampler with equal weights.
    pub fn terms(&self) -> Vec<(f64, &OperatorAtom)> {
        match self {
            Family::Mixture(atoms) => atoms.iter().map(|(w, a)| (*w, a)).collect(),
            Family::Sampler(s) => {
                let w = 1.0 / s.mc_atoms.len() as f64;
                s.mc_atoms.iter().map(|a| (w, a)).collect()
            }
        }
    }

    /// Whether mean quantities are exact (finite mixture) rather than
    /// Monte-Carlo estimates.
    pub fn is_exact(&self) -> bool {
        matches!(self, Family::Mixture(_))
    }

    fn atom(&self, index: u64) -> Result<Cow<'_, OperatorAtom>> {
        match self {
            Family::Mixture(atoms) => atoms
                .get(index as usize)
                .map(|(_, a)| Cow::Borrowed(a))
                .ok_or_else(|| Error::State(format!("recorded index {index} out of range"))),
            Family::Sampler(s) => s.atom(index).map(Cow::Owned),
        }
    }

    fn validate(&self, side: &str) -> Result<usize> {
        match self {
            Family::Mixture(atoms) => {
                if atoms.is_empty() {
                    return Err(Error::Construction(format!("{side} family is empty")));
                }
                let dim = atoms[0].1.dim();
                let mut total = 0.0;
                for (i, (w, a)) in atoms.iter().enumerate() {
                    if !(w.is_finite() && *w >= 0.0) {
                        return Err(Error::Construction(format!("{side}[{i}].weight must be >= 0, got {w}")));
                    }
                    if a.dim() != dim {
                        return Err(Error::Dimension { expected: dim, got: a.dim() });
                    }
                    total += w;
                }
                if (total - 1.0).abs() > WEIGHT_TOL {
                    return Err(Error::Construction(format!("{side} weights sum to {total}, expected 1")));
                }
                Ok(dim)
            }
            Family::Sampler(s) => Ok(s.dim()),
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        Ok(match self {
            Family::Mixture(atoms) if atoms.len() == 1 => Sampler::Constant,
            Family::Mixture(atoms) => Sampler::Weighted(
                WeightedIndex::new(atoms.iter().map(|(w, _)| *w))
                    .map_err(|e| Error::Construction(format!("mixture weights: {e}")))?,
            ),
            Family::Sampler(_) => Sampler::Key,
        })
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Constant,
    Weighted(WeightedIndex<f64>),
    Key,
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Sampler::Constant => 0,
            Sampler::Weighted(w) => w.sample(rng) as u64,
            Sampler::Key => rng.random(),
        }
    }
}

/// A custom selection `b(ξ, x) ∈ B(ξ, x)`.
pub type SelectionFn = Arc<dyn Fn(&OperatorAtom, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;

/// Rule choosing `b(ξ, x)` from `B(ξ, x)`.
#[derive(Clone, Default)]
pub enum BSelection {
    /// The least-norm element `B_0(ξ, x)`.
    #[default]
    LeastNorm,
    Custom(SelectionFn),
}

impl fmt::Debug for BSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BSelection::LeastNorm => f.write_str("LeastNorm"),
            BSelection::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Which atoms were drawn at one iteration. Enough to replay the draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InnovationRecord {
    /// Mixture index of the `A` atom.
    pub a: u64,
    /// Mixture index or sampler key of the `B` atom.
    pub b: u64,
}

impl fmt::Display for InnovationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.a, self.b)
    }
}

impl std::str::FromStr for InnovationRecord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::State(format!("malformed innovation record {s:?}"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        Ok(InnovationRecord { a: a.parse().map_err(|_| bad())?, b: b.parse().map_err(|_| bad())? })
    }
}

/// Source of the iid innovations `u_n`: a seeded generator, or a recorded
/// sequence being replayed.
#[derive(Debug, Clone)]
pub struct InnovationStream {
    source: Source,
}

#[derive(Debug, Clone)]
enum Source {
    Seeded(ChaCha8Rng),
    Replay { records: Vec<InnovationRecord>, next: usize },
}

impl InnovationStream {
    pub fn seeded(seed: u64) -> Self {
        InnovationStream { source: Source::Seeded(ChaCha8Rng::seed_from_u64(seed)) }
    }

    pub fn replay(records: Vec<InnovationRecord>) -> Self {
        InnovationStream { source: Source::Replay { records, next: 0 } }
    }
}

/// One draw of the operator pair.
#[derive(Debug, Clone)]
pub struct Draw<'a> {
    pub a: Cow<'a, OperatorAtom>,
    pub b: Cow<'a, OperatorAtom>,
    pub record: InnovationRecord,
}

/// Per-atom selections certifying `0 ∈ 𝒜(x⋆) + ℬ(x⋆)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCertificate {
    pub point: DVector<f64>,
    /// `φ_i ∈ A_i(x⋆)`, one per `A` term.
    pub phi: Vec<DVector<f64>>,
    /// `ψ_i = b_i(x⋆) ∈ B_i(x⋆)`, one per `B` term.
    pub psi: Vec<DVector<f64>>,
    /// `‖Σ α_i φ_i + Σ β_i ψ_i‖`.
    pub residual: f64,
}

/// The distribution of the operator pair. `A` and `B` atoms are drawn
/// independently.
#[derive(Debug, Clone)]
pub struct RandomProgram {
    dim: usize,
    a: Family,
    b: Family,
    a_sampler: Sampler,
    b_sampler: Sampler,
    selection: BSelection,
    p: f64,
}

/// Settings of the Minkowski-sum projection subproblem.
pub const MINKOWSKI_TOL: f64 = 1e-10;
pub const MINKOWSKI_MAX_ITERS: usize = 100_000;

impl RandomProgram {
    /// Validates the families: weights, dimensions, full-domain `B` atoms and
    /// a nonempty essential intersection.
    pub fn new(a: Family, b: Family) -> Result<Self> {
        if matches!(a, Family::Sampler(_)) {
            return Err(Error::Unsupported("parametric families are only supported for B".into()));
        }
        let dim = a.validate("a")?;
        let bdim = b.validate("b")?;
        if bdim != dim {
            return Err(Error::Dimension { expected: dim, got: bdim });
        }
        if let Family::Mixture(atoms) = &b {
            if let Some(i) = atoms.iter().position(|(_, atom)| !atom.domain().is_full()) {
                return Err(Error::Construction(format!("b[{i}] must have full domain")));
            }
        }
        let program = RandomProgram {
            dim,
            a_sampler: a.sampler()?,
            b_sampler: b.sampler()?,
            a,
            b,
            selection: BSelection::LeastNorm,
            p: 1.0,
        };
        let sets = program.domain_sets();
        project_intersection(&sets, &DVector::zeros(dim), INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)
            .map_err(|_| Error::Infeasible("essential intersection of the A domains is empty".into()))?;
        Ok(program)
    }

    pub fn with_selection(mut self, selection: BSelection) -> Self {
        self.selection = selection;
        self
    }

    /// Sets the integrability exponent `p >= 1`.
    pub fn with_p(mut self, p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::Construction(format!("p must be >= 1, got {p}")));
        }
        self.p = p;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn a_family(&self) -> &Family {
        &self.a
    }

    pub fn b_family(&self) -> &Family {
        &self.b
    }

    pub fn a_terms(&self) -> Vec<(f64, &OperatorAtom)> {
        self.a.terms()
    }

    pub fn b_terms(&self) -> Vec<(f64, &OperatorAtom)> {
        self.b.terms()
    }

    /// Domains of the positive-weight `A` atoms; their intersection is `𝒟`.
    pub fn domain_sets(&self) -> Vec<&DomainDescriptor> {
        self.a.terms().into_iter().filter(|(w, _)| *w > 0.0).map(|(_, a)| a.domain()).collect()
    }

    /// Projection onto `clos(𝒟)`.
    pub fn project_essential(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(x, self.dim)?;
        ensure_finite(x, "projection argument")?;
        project_intersection(&self.domain_sets(), x, INTERSECTION_TOL, INTERSECTION_MAX_CYCLES)
    }

    /// `𝒅(x)`, the distance to `𝒟`.
    pub fn essential_distance(&self, x: &DVector<f64>) -> Result<f64> {
        Ok((x - self.project_essential(x)?).norm())
    }

    pub fn in_essential(&self, x: &DVector<f64>) -> bool {
        self.domain_sets().iter().all(|d| d.contains(x))
    }

    fn ensure_in_essential(&self, x: &DVector<f64>) -> Result<()> {
        ensure_dim(x, self.dim)?;
        ensure_finite(x, "point")?;
        for d in self.domain_sets() {
            if !d.contains(x) {
                return Err(Error::Domain { distance: d.distance(x) });
            }
        }
        Ok(())
    }

    /// Draws `u_{n+1}` from `stream`.
    pub fn sample(&self, stream: &mut InnovationStream) -> Result<Draw<'_>> {
        let record = match &mut stream.source {
            Source::Seeded(rng) => {
                let a = self.a_sampler.draw(rng);
                let b = self.b_sampler.draw(rng);
                InnovationRecord { a, b }
            }
            Source::Replay { records, next } => {
                let r = *records.get(*next).ok_or_else(|| Error::State("replay stream exhausted".into()))?;
                *next += 1;
                r
            }
        };
        self.draw_recorded(record)
    }

    /// The atoms named by `record`.
    pub fn draw_recorded(&self, record: InnovationRecord) -> Result<Draw<'_>> {
        Ok(Draw { a: self.a.atom(record.a)?, b: self.b.atom(record.b)?, record })
    }

    /// `b(ξ, x)` for the atom `b_atom`.
    pub fn select_b(&self, b_atom: &OperatorAtom, x: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.selection {
            BSelection::LeastNorm => b_atom.least_norm(x),
            BSelection::Custom(f) => f(b_atom, x),
        }
    }

    /// `ℬ(x) = Σ β_i b_i(x)` with the configured selection.
    pub fn mean_b(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(x, self.dim)?;
        ensure_finite(x, "mean_b argument")?;
        let mut acc = DVector::zeros(self.dim);
        for (w, atom) in self.b.terms() {
            if w > 0.0 {
                acc += self.select_b(atom, x)? * w;
            }
        }
        Ok(acc)
    }

    /// `dist(0, 𝒜(x) + ℬ(x))`, with `𝒜(x)` the weighted Minkowski sum of
    /// the `A` value sets and `ℬ(x)` the mean selection.
    pub fn mean_a_distance_to_zero(&self, x: &DVector<f64>, tol: f64) -> Result<f64> {
        Ok(self.minkowski(x, tol)?.residual)
    }

    /// Selections realising `dist(0, 𝒜(x) + ℬ(x))` if it is at most `tol`.
    pub fn zero_certificate(&self, x: &DVector<f64>, tol: f64) -> Result<Option<ZeroCertificate>> {
        let cert = self.minkowski(x, tol.min(MINKOWSKI_TOL))?;
        Ok((cert.residual <= tol).then_some(cert))
    }

    fn minkowski(&self, x: &DVector<f64>, tol: f64) -> Result<ZeroCertificate> {
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
        }
        self.ensure_in_essential(x)?;
        let a_terms = self.a.terms();
        let mut sets = Vec::with_capacity(a_terms.len());
        for (w, atom) in &a_terms {
            sets.push((*w, atom.value_set(x)?));
        }
        let mut psi = Vec::new();
        let mut constant = DVector::zeros(self.dim);
        for (w, atom) in self.b.terms() {
            let b = self.select_b(atom, x)?;
            constant += &b * w;
            psi.push(b);
        }
        let (values, residual) = minkowski_least_norm(&sets, &constant, tol, MINKOWSKI_MAX_ITERS);
        Ok(ZeroCertificate { point: x.clone(), phi: values, psi, residual })
    }

    /// `Σ α_i σ(A_i) + Σ β_i σ(B_i)` where `σ` is the strong-monotonicity
    /// modulus of an atom (0 if unknown).
    pub fn strong_monotonicity(&self) -> f64 {
        let side = |f: &Family| f.terms().iter().map(|(w, a)| w * a.strong_monotonicity()).sum::<f64>();
        side(&self.a) + side(&self.b)
    }

    /// Demipositivity conditions known for `𝒜 + ℬ`.
    pub fn demipositivity_flags(&self) -> Vec<DemipositivityFlag> {
        let alpha = self.strong_monotonicity();
        if alpha > 0.0 {
            vec![DemipositivityFlag::StronglyMonotone(alpha)]
        } else {
            Vec::new()
        }
    }
}

/// Minimises `‖c + Σ w_i v_i‖` over `v_i ∈ S_i` by accelerated projected
/// gradient. Returns the per-set values `v_i` and the achieved norm.
/// Zero-weight sets contribute their least-norm element.
pub(crate) fn minkowski_least_norm(
    sets: &[(f64, ValueSet)],
    constant: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> (Vec<DVector<f64>>, f64) {
    let mut values: Vec<DVector<f64>> = sets.iter().map(|(_, s)| s.least_norm()).collect();
    let mut offset = constant.clone();
    let mut blocks = Vec::new();
    for (i, (w, s)) in sets.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        if s.is_singleton() {
            offset += &s.offset * *w;
        } else {
            blocks.push(i);
        }
    }
    // Work with u_i = w_i v_i ∈ w_i S_i.
    let scaled: Vec<ValueSet> = blocks.iter().map(|&i| sets[i].1.scaled(sets[i].0)).collect();
    match scaled.len() {
        0 => {}
        1 => {
            let u = scaled[0].project(&-&offset);
            values[blocks[0]] = &u / sets[blocks[0]].0;
            offset += u;
        }
        k => {
            let step = 1.0 / k as f64;
            let mut u: Vec<DVector<f64>> = scaled.iter().map(|s| s.least_norm()).collect();
            let mut y = u.clone();
            let mut t = 1.0f64;
            let scale = 1.0 + offset.norm();
            for _ in 0..max_iters {
                let grad = y.iter().fold(offset.clone(), |acc, v| acc + v);
                let next: Vec<DVector<f64>> =
                    scaled.iter().zip(&y).map(|(s, yi)| s.project(&(yi - &grad * step))).collect();
                let moved = next.iter().zip(&u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                let beta = (t - 1.0) / t_next;
                y = next.iter().zip(&u).map(|(n, o)| n + (n - o) * beta).collect();
                u = next;
                t = t_next;
                if moved <= tol * scale {
                    break;
                }
            }
            for (&i, ui) in blocks.iter().zip(&u) {
                values[i] = ui / sets[i].0;
                offset += ui;
            }
        }
    }
    (values, offset.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn atom(spec: CatalogAtom) -> OperatorAtom {
        make_atom(&spec).unwrap()
    }

    fn shifted_identity(shift: f64) -> OperatorAtom {
        atom(CatalogAtom::QuadraticGradient { matrix: nalgebra::DMatrix::identity(1, 1), vector: v(&[-shift]) })
    }

    fn halfline_program() -> RandomProgram {
        let a = atom(CatalogAtom::NormalCone { dim: 1, set: DomainDescriptor::orthant(&[1.0]) });
        RandomProgram::new(Family::single(a), Family::single(shifted_identity(1.0))).unwrap()
    }

    fn abs_program(shift: f64) -> RandomProgram {
        let a = atom(CatalogAtom::L1Subdifferential { dim: 1, lambda: 1.0 });
        RandomProgram::new(Family::single(a), Family::single(shifted_identity(shift))).unwrap()
    }

    #[test]
    fn degenerate_mixture_always_draws_zero() {
        let p = halfline_program();
        let mut s = InnovationStream::seeded(1);
        for _ in 0..100 {
            assert_eq!(p.sample(&mut s).unwrap().record, InnovationRecord { a: 0, b: 0 });
        }
    }

    #[test]
    fn fair_mixture_frequencies() {
        let zero = atom(CatalogAtom::Zero { dim: 1 });
        let a = Family::Mixture(vec![(0.5, zero.clone()), (0.5, zero.clone())]);
        let p = RandomProgram::new(a, Family::single(zero)).unwrap();
        let mut s = InnovationStream::seeded(3);
        let n = 100_000;
        let hits = (0..n).filter(|_| p.sample(&mut s).unwrap().record.a == 0).count();
        let freq = hits as f64 / n as f64;
        // Three standard deviations of a fair binomial proportion.
        let band = 3.0 * (0.25 / n as f64).sqrt();
        assert!((freq - 0.5).abs() <= band, "{freq}");
        assert!((0.49..=0.51).contains(&freq));
    }

    #[test]
    fn identical_streams_give_identical_records() {
        let zero = atom(CatalogAtom::Zero { dim: 1 });
        let a = Family::Mixture(vec![(0.3, zero.clone()), (0.7, zero.clone())]);
        let p = RandomProgram::new(a, Family::single(zero)).unwrap();
        let mut s1 = InnovationStream::seeded(11);
        let mut s2 = s1.clone();
        for _ in 0..50 {
            assert_eq!(p.sample(&mut s1).unwrap().record, p.sample(&mut s2).unwrap().record);
        }
    }

    #[test]
    fn replay_stream_exhaustion() {
        let p = halfline_program();
        let mut s = InnovationStream::replay(vec![InnovationRecord { a: 0, b: 0 }]);
        assert!(p.sample(&mut s).is_ok());
        assert!(matches!(p.sample(&mut s), Err(Error::State(_))));
        let mut bad = InnovationStream::replay(vec![InnovationRecord { a: 5, b: 0 }]);
        assert!(matches!(p.sample(&mut bad), Err(Error::State(_))));
    }

    #[test]
    fn record_text_round_trip() {
        let r = InnovationRecord { a: 3, b: 17 };
        assert_eq!(r.to_string().parse::<InnovationRecord>().unwrap(), r);
        assert!("3".parse::<InnovationRecord>().is_err());
    }

    #[test]
    fn mean_b_examples() {
        assert_eq!(halfline_program().mean_b(&v(&[0.0])).unwrap(), v(&[-1.0]));

        // Three regression samples: hand sum of -(1/3) Σ y a at the origin.
        let data = [(v(&[1.0, 0.0]), 2.0), (v(&[0.0, 2.0]), -1.0), (v(&[1.0, 1.0]), 0.5)];
        let atoms: Vec<_> = data
            .iter()
            .map(|(a, y)| atom(CatalogAtom::LinearRegression { features: a.clone(), target: *y }))
            .collect();
        let zero2 = atom(CatalogAtom::Zero { dim: 2 });
        let p = RandomProgram::new(Family::single(zero2), Family::uniform(atoms)).unwrap();
        let expected = v(&[-(2.0 + 0.5) / 3.0, -(-2.0 + 0.5) / 3.0]);
        assert!((p.mean_b(&v(&[0.0, 0.0])).unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn symmetric_selections_cancel() {
        let id = atom(CatalogAtom::identity(2));
        let b = Family::Mixture(vec![(0.5, id.clone()), (0.5, id.clone())]);
        let zero = atom(CatalogAtom::Zero { dim: 2 });
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let sel: SelectionFn = Arc::new(move |_, x| {
            let k = calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            Ok(if k % 2 == 0 { x.clone() } else { -x })
        });
        let p = RandomProgram::new(Family::single(zero), b).unwrap().with_selection(BSelection::Custom(sel));
        assert_eq!(p.mean_b(&v(&[1.5, -0.5])).unwrap(), v(&[0.0, 0.0]));
    }

    #[test]
    fn distance_to_zero_examples() {
        let p = halfline_program();
        assert!(p.mean_a_distance_to_zero(&v(&[1.0]), 1e-10).unwrap() < 1e-12);
        // (-∞, 0] + {-1} is at distance 1 from the origin.
        assert!((p.mean_a_distance_to_zero(&v(&[0.0]), 1e-10).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(p.mean_a_distance_to_zero(&v(&[-1.0]), 1e-10), Err(Error::Domain { .. })));

        let rot = atom(CatalogAtom::rotation());
        let zero = atom(CatalogAtom::Zero { dim: 2 });
        let p = RandomProgram::new(Family::single(rot), Family::single(zero)).unwrap();
        assert_eq!(p.mean_a_distance_to_zero(&v(&[0.0, 0.0]), 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn certificate_examples() {
        let cert = halfline_program().zero_certificate(&v(&[1.0]), 1e-8).unwrap().unwrap();
        assert_eq!(cert.phi, vec![v(&[0.0])]);
        assert_eq!(cert.psi, vec![v(&[0.0])]);

        let cert = abs_program(0.0).zero_certificate(&v(&[0.0]), 1e-8).unwrap().unwrap();
        assert!(cert.phi[0][0].abs() <= 1.0);
        assert!(cert.phi[0][0].abs() < 1e-12 && cert.psi[0][0] == 0.0);

        assert!(abs_program(0.5).zero_certificate(&v(&[0.5]), 1e-8).unwrap().is_none());
        assert!(abs_program(0.5).zero_certificate(&v(&[0.0]), 1e-8).unwrap().is_some());
    }

    #[test]
    fn minkowski_sum_of_intervals() {
        // [-1, 1] + [-2, 2] + {5}: distance 2 from zero.
        let s1 = ValueSet::new(DVector::zeros(1), crate::valueset::Shape::Box { lo: v(&[-1.0]), hi: v(&[1.0]) });
        let s2 = ValueSet::new(DVector::zeros(1), crate::valueset::Shape::Box { lo: v(&[-2.0]), hi: v(&[2.0]) });
        let (vals, r) = minkowski_least_norm(&[(1.0, s1.clone()), (1.0, s2.clone())], &v(&[5.0]), 1e-12, 100_000);
        assert!((r - 2.0).abs() < 1e-9, "{r}");
        assert!(s1.contains(&vals[0], 1e-9) && s2.contains(&vals[1], 1e-9));
    }

    #[test]
    fn rejects_bad_programs() {
        let zero = atom(CatalogAtom::Zero { dim: 1 });
        let neg = Family::Mixture(vec![(-0.5, zero.clone()), (1.5, zero.clone())]);
        let err = RandomProgram::new(neg, Family::single(zero.clone())).unwrap_err().to_string();
        assert!(err.contains("a[0].weight"), "{err}");
        let short = Family::Mixture(vec![(0.5, zero.clone())]);
        assert!(RandomProgram::new(short, Family::single(zero.clone())).is_err());
        let cone = atom(CatalogAtom::NormalCone { dim: 1, set: DomainDescriptor::orthant(&[1.0]) });
        assert!(RandomProgram::new(Family::single(zero.clone()), Family::single(cone.clone())).is_err());
        let left = atom(CatalogAtom::NormalCone { dim: 1, set: DomainDescriptor::boxed(v(&[-3.0]), v(&[-1.0])).unwrap() });
        let disjoint = Family::Mixture(vec![(0.5, cone), (0.5, left)]);
        assert!(matches!(RandomProgram::new(disjoint, Family::single(zero)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn sampler_atoms_are_keyed() {
        let s = DataSampler::new(v(&[1.0, -1.0]), 1.0, 0.1, 5, 10).unwrap();
        assert_eq!(s.data(3), s.data(3));
        assert_ne!(s.data(3), s.data(4));
        let zero = atom(CatalogAtom::Zero { dim: 2 });
        let p = RandomProgram::new(Family::single(zero), Family::Sampler(s)).unwrap();
        let mut st = InnovationStream::seeded(0);
        let d = p.sample(&mut st).unwrap();
        let replay = p.draw_recorded(d.record).unwrap();
        assert_eq!(d.b.linear_part(), replay.b.linear_part());
    }
}
