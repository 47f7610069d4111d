//! Moment-matrix relaxations of the quantum set (levels 1 and 2) and the
//! guessing-probability bound.
//!
//! Words are products of measurement projectors `A(a|x)`, `B(b|y)` with the
//! last outcome of every setting eliminated through completeness. Products
//! reduce by idempotence, same-setting orthogonality, and commutation of
//! Alice symbols past Bob symbols. A moment matrix `Γ[i,j] = ⟨w_i† w_j⟩` is
//! real symmetric with entries identified whenever the reduced products
//! coincide (up to adjoints, since all moments are taken real).
//!
//! Three problems are posed over this structure:
//!  - membership: does a PSD moment completion matching a behavior's
//!    probabilities exist (minimum diagonal slack formulation);
//!  - Bell range: extremal Bell values over normalized moment matrices;
//!  - guessing probability: Eve's decomposition into one subnormalized
//!    moment block per guessed outcome, constrained only by total weight
//!    and the observed Bell value.

use crate::facets::BellInequality;
use crate::scenario::{Behavior, Scenario};
use crate::sdp::{
    solve, SdpError, SdpProblem, SdpSolution, SdpStatus, SolverOptions, SparseFunctional,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Feasibility slack for membership decisions.
pub const TOL_MEMBERSHIP: f64 = 1e-7;
/// Bell values this far outside the quantum range are infeasible.
pub const TOL_INFEASIBLE: f64 = 1e-7;
/// Required solver accuracy on accepted solutions.
pub const TOL_SOLVER_GAP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum NpaError {
    #[error("unsupported relaxation level {0}; levels 1 and 2 are available")]
    UnsupportedLevel(u8),
    #[error("inequality/structure scenario mismatch")]
    ScenarioMismatch,
    #[error("guessed setting {x} out of range 1..={m}")]
    BadSetting { x: usize, m: usize },
    #[error("Bell functional is constant on the moment structure")]
    DegenerateBellFunctional,
    #[error("solver stalled: relative gap {rel_gap:.3e}, primal {primal:.3e}, dual {dual:.3e}")]
    SolverFailure {
        rel_gap: f64,
        primal: f64,
        dual: f64,
    },
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

// ---------------------------------------------------------------------------
// Words
// ---------------------------------------------------------------------------

/// A reduced projector word: Alice symbols then Bob symbols, each a
/// `(setting, outcome)` pair with outcomes `1..=k-1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word {
    pub alice: Vec<(u8, u8)>,
    pub bob: Vec<(u8, u8)>,
}

impl Word {
    pub fn identity() -> Self {
        Word {
            alice: Vec::new(),
            bob: Vec::new(),
        }
    }

    pub fn alice_single(x: u8, a: u8) -> Self {
        Word {
            alice: vec![(x, a)],
            bob: Vec::new(),
        }
    }

    pub fn bob_single(y: u8, b: u8) -> Self {
        Word {
            alice: Vec::new(),
            bob: vec![(y, b)],
        }
    }

    pub fn len(&self) -> usize {
        self.alice.len() + self.bob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn adjoint(&self) -> Self {
        Word {
            alice: self.alice.iter().rev().cloned().collect(),
            bob: self.bob.iter().rev().cloned().collect(),
        }
    }

    /// Canonical representative of `{w, w†}`; moments are real, so both
    /// carry the same value.
    fn hermitian_rep(&self) -> Self {
        let adj = self.adjoint();
        if *self <= adj {
            self.clone()
        } else {
            adj
        }
    }
}

/// Reduces one party's projector string; `None` is the zero operator.
fn reduce_party(symbols: impl Iterator<Item = (u8, u8)>) -> Option<Vec<(u8, u8)>> {
    let mut out: Vec<(u8, u8)> = Vec::new();
    for sym in symbols {
        if let Some(&top) = out.last() {
            if top == sym {
                continue; // idempotent projector
            }
            if top.0 == sym.0 {
                return None; // orthogonal outcomes of one setting
            }
        }
        out.push(sym);
    }
    Some(out)
}

/// Reduced product `left† · right`; `None` is the zero operator.
fn adjoint_product(left: &Word, right: &Word) -> Option<Word> {
    let alice = reduce_party(
        left.alice
            .iter()
            .rev()
            .cloned()
            .chain(right.alice.iter().cloned()),
    )?;
    let bob = reduce_party(
        left.bob
            .iter()
            .rev()
            .cloned()
            .chain(right.bob.iter().cloned()),
    )?;
    Some(Word { alice, bob })
}

// ---------------------------------------------------------------------------
// Moment structure
// ---------------------------------------------------------------------------

/// The word list of an NPA level together with the canonical assignment of
/// moment variables to moment-matrix entries.
#[derive(Debug, Clone)]
pub struct MomentStructure {
    scenario: Scenario,
    level: u8,
    words: Vec<Word>,
    /// Moment id per upper-triangle entry, row-major over `i ≤ j`;
    /// `None` marks entries whose operator product is zero.
    entry_moment: Vec<Option<usize>>,
    /// All entries `(i, j)` of each moment id, anchor first.
    groups: Vec<Vec<(usize, usize)>>,
    /// Moment id by reduced word representative.
    moment_of: BTreeMap<Word, usize>,
    word_pos: BTreeMap<Word, usize>,
}

/// Builds the level-1 or level-2 word list and its symmetry map. Ordering
/// is deterministic: identity, then length-1 words (Alice before Bob, each
/// lexicographic), then length-2 words (AA, BB, AB).
pub fn build_moment_structure(scenario: Scenario, level: u8) -> Result<MomentStructure, NpaError> {
    if level != 1 && level != 2 {
        return Err(NpaError::UnsupportedLevel(level));
    }
    let m = scenario.settings() as u8;
    let k = scenario.outcomes() as u8;

    let mut words = vec![Word::identity()];
    let mut singles_a = Vec::new();
    let mut singles_b = Vec::new();
    for x in 1..=m {
        for a in 1..k {
            singles_a.push(Word::alice_single(x, a));
        }
    }
    for y in 1..=m {
        for b in 1..k {
            singles_b.push(Word::bob_single(y, b));
        }
    }
    words.extend(singles_a.iter().cloned());
    words.extend(singles_b.iter().cloned());

    if level == 2 {
        let mut pairs = Vec::new();
        for u in &singles_a {
            for v in &singles_a {
                if let Some(w) = adjoint_product(&u.adjoint(), v) {
                    if w.len() == 2 {
                        pairs.push(w);
                    }
                }
            }
        }
        for u in &singles_b {
            for v in &singles_b {
                if let Some(w) = adjoint_product(&u.adjoint(), v) {
                    if w.len() == 2 {
                        pairs.push(w);
                    }
                }
            }
        }
        for u in &singles_a {
            for v in &singles_b {
                pairs.push(Word {
                    alice: u.alice.clone(),
                    bob: v.bob.clone(),
                });
            }
        }
        pairs.sort();
        pairs.dedup();
        // Keep the AA, BB, AB grouping stable: sort within kind only.
        words.extend(pairs.into_iter());
    }

    let n = words.len();
    let word_pos: BTreeMap<Word, usize> =
        words.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();

    let mut entry_moment = Vec::with_capacity(n * (n + 1) / 2);
    let mut moment_of: BTreeMap<Word, usize> = BTreeMap::new();
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    for i in 0..n {
        for j in i..n {
            match adjoint_product(&words[i], &words[j]) {
                None => entry_moment.push(None),
                Some(prod) => {
                    let rep = prod.hermitian_rep();
                    let next = groups.len();
                    let id = *moment_of.entry(rep).or_insert(next);
                    if id == groups.len() {
                        groups.push(Vec::new());
                    }
                    groups[id].push((i, j));
                    entry_moment.push(Some(id));
                }
            }
        }
    }

    Ok(MomentStructure {
        scenario,
        level,
        words,
        entry_moment,
        groups,
        moment_of,
        word_pos,
    })
}

impl MomentStructure {
    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn level(&self) -> u8 {
        self.level
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_moments(&self) -> usize {
        self.groups.len()
    }

    fn tri_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= j);
        let n = self.words.len();
        i * n - i * (i + 1) / 2 + j
    }

    /// Moment id of entry `(i, j)`; `None` for zero-product entries.
    pub fn entry_moment(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entry_moment[self.tri_index(i, j)]
    }

    fn word_index(&self, w: &Word) -> usize {
        self.word_pos[w]
    }

    /// Anchor entry (first occurrence) of a word's moment.
    fn anchor_of_word(&self, w: &Word) -> (usize, usize) {
        let id = self.moment_of[&w.hermitian_rep()];
        self.groups[id][0]
    }

    /// Adds the symmetry chain and zero-entry constraints of one moment
    /// block to `problem`. `diag_slack` names a 1×1 block holding a slack
    /// `t` such that the modeled moments are `Γ = X_block − t·I`.
    fn add_block_structure(
        &self,
        problem: &mut SdpProblem,
        block: usize,
        diag_slack: Option<usize>,
    ) {
        let translate = |entries: &[(usize, usize, f64)]| -> SparseFunctional {
            let mut f = SparseFunctional::new();
            let mut t_coeff = 0.0;
            for &(i, j, c) in entries {
                f.push(block, i, j, c);
                if i == j {
                    t_coeff -= c;
                }
            }
            if let Some(tb) = diag_slack {
                if t_coeff != 0.0 {
                    f.push(tb, 0, 0, t_coeff);
                }
            }
            f
        };
        for group in &self.groups {
            let (ai, aj) = group[0];
            for &(i, j) in &group[1..] {
                problem.add_constraint(
                    translate(&[(ai, aj, 1.0), (i, j, -1.0)]),
                    0.0,
                );
            }
        }
        let n = self.words.len();
        for i in 0..n {
            for j in i..n {
                if self.entry_moment[self.tri_index(i, j)].is_none() {
                    problem.add_constraint(translate(&[(i, j, 1.0)]), 0.0);
                }
            }
        }
    }

    /// Expands `P(ab|xy)` over moment-matrix entries of one block using
    /// last-outcome elimination; coefficients land on the identity entry,
    /// the `(0, word)` marginal entries and the `(A-word, B-word)` joint
    /// entries. The `(0,0)` coefficient multiplies the block's (possibly
    /// subnormalized) weight.
    fn probability_entries(
        &self,
        a: usize,
        b: usize,
        x: usize,
        y: usize,
    ) -> Vec<(usize, usize, f64)> {
        let k = self.scenario.outcomes();
        // Party factor: list of (Option<word index>, sign).
        let factor = |single: &dyn Fn(u8) -> Word, outcome: usize| -> Vec<(Option<usize>, f64)> {
            if outcome < k {
                vec![(Some(self.word_index(&single(outcome as u8))), 1.0)]
            } else {
                let mut v = vec![(None, 1.0)];
                for o in 1..k {
                    v.push((Some(self.word_index(&single(o as u8))), -1.0));
                }
                v
            }
        };
        let xa = x as u8;
        let yb = y as u8;
        let fa = factor(&|o| Word::alice_single(xa, o), a);
        let fb = factor(&|o| Word::bob_single(yb, o), b);
        let mut out = Vec::new();
        for &(wa, ca) in &fa {
            for &(wb, cb) in &fb {
                let coeff = ca * cb;
                let (i, j) = match (wa, wb) {
                    (None, None) => (0, 0),
                    (Some(ia), None) => (0, ia),
                    (None, Some(ib)) => (0, ib),
                    (Some(ia), Some(ib)) => (ia.min(ib), ia.max(ib)),
                };
                out.push((i, j, coeff));
            }
        }
        out
    }

    /// The Bell functional of `ineq` over one block's entries.
    fn bell_entries(&self, ineq: &BellInequality) -> Vec<(usize, usize, f64)> {
        let s = self.scenario;
        let (m, k) = (s.settings(), s.outcomes());
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for x in 1..=m {
            for y in 1..=m {
                for a in 1..=k {
                    for b in 1..=k {
                        let h = ineq.coefficients[s.index(a, b, x, y).unwrap()];
                        if h == 0.0 {
                            continue;
                        }
                        for (i, j, c) in self.probability_entries(a, b, x, y) {
                            *acc.entry((i, j)).or_insert(0.0) += h * c;
                        }
                    }
                }
            }
        }
        acc.into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((i, j), c)| (i, j, c))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Membership
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipResult {
    pub member: bool,
    /// Minimum diagonal slack needed for a PSD completion; zero (up to
    /// solver accuracy) inside the relaxation.
    pub margin: f64,
    pub gap: f64,
}

/// Builds the membership problem: minimize `t ≥ 0` such that the data
/// moment matrix plus `t·I` has a PSD completion.
pub fn q2_problem(behavior: &Behavior, structure: &MomentStructure) -> SdpProblem {
    let n = structure.n_words();
    let mut problem = SdpProblem::new(vec![n, 1], false);
    let t_block = 1;
    structure.add_block_structure(&mut problem, 0, Some(t_block));

    let s = structure.scenario;
    let k = s.outcomes();
    let m = s.settings();
    // Γ[0,0] = 1: entry (0,0) is diagonal, so the slack enters.
    let mut f = SparseFunctional::new();
    f.push(0, 0, 0, 1.0);
    f.push(t_block, 0, 0, -1.0);
    problem.add_constraint(f, 1.0);
    // Marginals ⟨A(a|x)⟩, ⟨B(b|y)⟩ on their anchor entries (off-diagonal:
    // anchors are (0, word)).
    for x in 1..=m {
        for a in 1..k {
            let w = Word::alice_single(x as u8, a as u8);
            let (i, j) = structure.anchor_of_word(&w);
            let mut f = SparseFunctional::new();
            f.push(0, i, j, 1.0);
            if i == j {
                f.push(t_block, 0, 0, -1.0);
            }
            problem.add_constraint(f, behavior.alice_marginal(a, x).unwrap());
        }
    }
    for y in 1..=m {
        for b in 1..k {
            let w = Word::bob_single(y as u8, b as u8);
            let (i, j) = structure.anchor_of_word(&w);
            let mut f = SparseFunctional::new();
            f.push(0, i, j, 1.0);
            if i == j {
                f.push(t_block, 0, 0, -1.0);
            }
            problem.add_constraint(f, behavior.bob_marginal(b, y).unwrap());
        }
    }
    // Joint probabilities ⟨A(a|x) B(b|y)⟩ = P(ab|xy).
    for x in 1..=m {
        for y in 1..=m {
            for a in 1..k {
                for b in 1..k {
                    let ia = structure.word_index(&Word::alice_single(x as u8, a as u8));
                    let ib = structure.word_index(&Word::bob_single(y as u8, b as u8));
                    let mut f = SparseFunctional::new();
                    f.push(0, ia.min(ib), ia.max(ib), 1.0);
                    problem.add_constraint(f, behavior.value(a, b, x, y).unwrap());
                }
            }
        }
    }
    let mut obj = SparseFunctional::new();
    obj.push(t_block, 0, 0, 1.0);
    problem.set_objective(obj);
    problem
}

/// Feasibility of a behavior within the level's relaxation of the quantum
/// set, within slack [`TOL_MEMBERSHIP`].
///
/// The decision is certificate-based, which keeps it sound even when the
/// interior-point iteration stalls on the rank-deficient optima that
/// deterministic behaviors produce: a primal-feasible point with slack
/// below tolerance certifies membership, and a dual bound above tolerance
/// certifies non-membership.
pub fn q2_membership(
    behavior: &Behavior,
    structure: &MomentStructure,
) -> Result<MembershipResult, NpaError> {
    let problem = q2_problem(behavior, structure);
    let sol = solve(&problem, &SolverOptions::default())?;
    let margin = sol.objective.max(0.0);
    let primal_ok = sol.primal_infeasibility <= 1e-6;
    let dual_ok = sol.dual_infeasibility <= 1e-6;
    if primal_ok && margin <= TOL_MEMBERSHIP {
        return Ok(MembershipResult {
            member: true,
            margin,
            gap: sol.rel_gap,
        });
    }
    // Weak duality: the dual objective bounds the minimum slack from below.
    if dual_ok && sol.dual_objective > 2.0 * TOL_MEMBERSHIP {
        return Ok(MembershipResult {
            member: false,
            margin: margin.max(sol.dual_objective),
            gap: sol.rel_gap,
        });
    }
    if sol.status == SdpStatus::Optimal && sol.rel_gap <= TOL_SOLVER_GAP {
        return Ok(MembershipResult {
            member: margin <= TOL_MEMBERSHIP,
            margin,
            gap: sol.rel_gap,
        });
    }
    Err(NpaError::SolverFailure {
        rel_gap: sol.rel_gap,
        primal: sol.primal_infeasibility,
        dual: sol.dual_infeasibility,
    })
}

// ---------------------------------------------------------------------------
// Bell range
// ---------------------------------------------------------------------------

/// Builds the normalized single-block extremal Bell value problem.
pub fn bell_range_problem(
    ineq: &BellInequality,
    structure: &MomentStructure,
    maximize: bool,
) -> Result<SdpProblem, NpaError> {
    if ineq.scenario != structure.scenario {
        return Err(NpaError::ScenarioMismatch);
    }
    let n = structure.n_words();
    let mut problem = SdpProblem::new(vec![n], maximize);
    structure.add_block_structure(&mut problem, 0, None);
    let mut f = SparseFunctional::new();
    f.push(0, 0, 0, 1.0);
    problem.add_constraint(f, 1.0);
    let entries = structure.bell_entries(ineq);
    if entries.iter().all(|&(i, j, _)| (i, j) == (0, 0)) {
        return Err(NpaError::DegenerateBellFunctional);
    }
    let mut obj = SparseFunctional::new();
    for (i, j, c) in entries {
        obj.push(0, i, j, c);
    }
    problem.set_objective(obj);
    Ok(problem)
}

/// `[min, max]` of the Bell value over the relaxation (the quantum range
/// certified at this level; the max of a CHSH-type inequality is its
/// Tsirelson bound).
pub fn quantum_bell_range(
    ineq: &BellInequality,
    structure: &MomentStructure,
) -> Result<(f64, f64), NpaError> {
    let lo = checked_solve(&bell_range_problem(ineq, structure, false)?)?;
    let hi = checked_solve(&bell_range_problem(ineq, structure, true)?)?;
    Ok((lo.objective, hi.objective))
}

// ---------------------------------------------------------------------------
// Guessing probability
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessStatus {
    Optimal,
    /// The requested Bell value lies outside the quantum range.
    Infeasible,
    SolverFailure,
}

/// Upper bound on Eve's probability of guessing Alice's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GuessingBound {
    pub p_guess: f64,
    pub status: GuessStatus,
    pub gap: f64,
}

/// Builds the Eve-decomposition problem: one subnormalized moment block per
/// guessed outcome `e`, maximizing `Σ_e ⟨A(e|x*)⟩_e` subject to
/// `Σ_e Γ_e[0,0] = 1` and the total Bell value matching the observation.
pub fn guessing_problem(
    bell_value: f64,
    ineq: &BellInequality,
    guessed_setting: usize,
    structure: &MomentStructure,
) -> Result<SdpProblem, NpaError> {
    if ineq.scenario != structure.scenario {
        return Err(NpaError::ScenarioMismatch);
    }
    let s = structure.scenario;
    let (m, k) = (s.settings(), s.outcomes());
    if guessed_setting < 1 || guessed_setting > m {
        return Err(NpaError::BadSetting {
            x: guessed_setting,
            m,
        });
    }
    let n = structure.n_words();
    let mut problem = SdpProblem::new(vec![n; k], true);
    for e in 0..k {
        structure.add_block_structure(&mut problem, e, None);
    }
    // Total weight.
    let mut weight = SparseFunctional::new();
    for e in 0..k {
        weight.push(e, 0, 0, 1.0);
    }
    problem.add_constraint(weight, 1.0);
    // Total Bell value.
    let entries = structure.bell_entries(ineq);
    if entries.iter().all(|&(i, j, _)| (i, j) == (0, 0)) {
        return Err(NpaError::DegenerateBellFunctional);
    }
    let mut bell = SparseFunctional::new();
    for e in 0..k {
        for &(i, j, c) in &entries {
            bell.push(e, i, j, c);
        }
    }
    problem.add_constraint(bell, bell_value);
    // Objective: block e guesses outcome e+1 of the chosen setting.
    let mut obj = SparseFunctional::new();
    for e in 0..k {
        let outcome = e + 1;
        for (i, j, c) in structure.probability_marginal_alice(outcome, guessed_setting) {
            obj.push(e, i, j, c);
        }
    }
    problem.set_objective(obj);
    Ok(problem)
}

impl MomentStructure {
    /// `P(a|x)` of one block as entries (last-outcome elimination).
    fn probability_marginal_alice(&self, a: usize, x: usize) -> Vec<(usize, usize, f64)> {
        let k = self.scenario.outcomes();
        if a < k {
            let idx = self.word_index(&Word::alice_single(x as u8, a as u8));
            vec![(0, idx, 1.0)]
        } else {
            let mut v = vec![(0, 0, 1.0)];
            for o in 1..k {
                let idx = self.word_index(&Word::alice_single(x as u8, o as u8));
                v.push((0, idx, -1.0));
            }
            v
        }
    }
}

/// Bounds the guessing probability of Alice's `guessed_setting` at an
/// observed Bell value. When the level's quantum range of the inequality is
/// supplied, values outside it are reported [`GuessStatus::Infeasible`] and
/// values hugging an endpoint are nudged inside before solving; with
/// `range = None` the value is trusted to be feasible (e.g. it was computed
/// from a behavior that passed membership).
pub fn bound_guessing_probability(
    bell_value: f64,
    ineq: &BellInequality,
    guessed_setting: usize,
    structure: &MomentStructure,
    range: Option<(f64, f64)>,
) -> Result<GuessingBound, NpaError> {
    let mut value = bell_value;
    if let Some((lo, hi)) = range {
        if bell_value > hi + TOL_INFEASIBLE || bell_value < lo - TOL_INFEASIBLE {
            return Ok(GuessingBound {
                p_guess: f64::NAN,
                status: GuessStatus::Infeasible,
                gap: f64::NAN,
            });
        }
        // Strict interior keeps the solve well-posed at the endpoints. The
        // bound behaves like √(distance to the endpoint) there, so the
        // nudge trades a O(√shift) bias against the 1/√shift amplification
        // of the solver's feasibility residual; 3e-8 balances both well
        // under the 1e-3 oracle tolerance.
        let shift = 3e-8 * (1.0 + (hi - lo).abs());
        value = bell_value.clamp(lo + shift, hi - shift);
    }
    let problem = guessing_problem(value, ineq, guessed_setting, structure)?;
    match checked_solve(&problem) {
        Ok(sol) => Ok(GuessingBound {
            p_guess: sol.objective.clamp(0.0, 1.0),
            status: GuessStatus::Optimal,
            gap: sol.rel_gap,
        }),
        Err(NpaError::SolverFailure { .. }) => Ok(GuessingBound {
            p_guess: f64::NAN,
            status: GuessStatus::SolverFailure,
            gap: f64::NAN,
        }),
        Err(e) => Err(e),
    }
}

/// Extracts the per-block weights `Γ_e[0,0]` of a guessing solution.
pub fn block_weights(solution: &SdpSolution) -> Vec<f64> {
    solution.blocks.iter().map(|b| b.get(0, 0)).collect()
}

fn checked_solve(problem: &SdpProblem) -> Result<SdpSolution, NpaError> {
    let sol = solve(problem, &SolverOptions::default())?;
    if sol.status != SdpStatus::Optimal && sol.rel_gap > TOL_SOLVER_GAP {
        return Err(NpaError::SolverFailure {
            rel_gap: sol.rel_gap,
            primal: sol.primal_infeasibility,
            dual: sol.dual_infeasibility,
        });
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facets::canonical_chsh;
    use crate::scenario::enumerate_vertices;

    fn s22() -> Scenario {
        Scenario::new(2, 2).unwrap()
    }

    fn s32() -> Scenario {
        Scenario::new(3, 2).unwrap()
    }

    fn ch_pr_box() -> Behavior {
        let s = s22();
        let mut p = vec![0.0; 16];
        for x in 1..=2 {
            for y in 1..=2 {
                if (x, y) == (2, 2) {
                    p[s.index(1, 2, x, y).unwrap()] = 0.5;
                    p[s.index(2, 1, x, y).unwrap()] = 0.5;
                } else {
                    p[s.index(1, 1, x, y).unwrap()] = 0.5;
                    p[s.index(2, 2, x, y).unwrap()] = 0.5;
                }
            }
        }
        Behavior::new(s, p).unwrap()
    }

    /// Isotropic CH-line behavior: `v·PR + (1−v)·uniform`, CH value `v − 1/2`.
    fn isotropic(v: f64) -> Behavior {
        Behavior::mixture(&[(v, &ch_pr_box()), (1.0 - v, &Behavior::uniform(s22()))]).unwrap()
    }

    /// Independent oracle: enumerate raw symbol strings of length ≤ level
    /// over both parties' projectors, reduce, and count distinct words.
    fn oracle_word_count(scenario: Scenario, level: usize) -> usize {
        let m = scenario.settings() as u8;
        let k = scenario.outcomes() as u8;
        let mut symbols: Vec<(bool, u8, u8)> = Vec::new(); // (is_bob, setting, outcome)
        for x in 1..=m {
            for a in 1..k {
                symbols.push((false, x, a));
            }
        }
        for y in 1..=m {
            for b in 1..k {
                symbols.push((true, y, b));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        seen.insert(Word::identity());
        let mut strings: Vec<Vec<(bool, u8, u8)>> = vec![Vec::new()];
        for _ in 0..level {
            let mut next = Vec::new();
            for s in &strings {
                for &sym in &symbols {
                    let mut t = s.clone();
                    t.push(sym);
                    next.push(t);
                }
            }
            for s in &next {
                let alice = reduce_party(
                    s.iter().filter(|t| !t.0).map(|t| (t.1, t.2)),
                );
                let bob = reduce_party(s.iter().filter(|t| t.0).map(|t| (t.1, t.2)));
                if let (Some(alice), Some(bob)) = (alice, bob) {
                    let w = Word { alice, bob };
                    if w.len() <= level {
                        seen.insert(w);
                    }
                }
            }
            strings = next;
        }
        seen.len()
    }

    #[test]
    fn word_counts_match_oracle() {
        let st = build_moment_structure(s22(), 2).unwrap();
        assert_eq!(st.n_words(), 13);
        assert_eq!(oracle_word_count(s22(), 2), 13);
        let st = build_moment_structure(s32(), 2).unwrap();
        assert_eq!(st.n_words(), 28);
        assert_eq!(oracle_word_count(s32(), 2), 28);
        let st = build_moment_structure(s22(), 1).unwrap();
        assert_eq!(st.n_words(), 5);
        assert!(build_moment_structure(s22(), 3).is_err());
    }

    #[test]
    fn hermitian_pairs_share_moments() {
        let st = build_moment_structure(s22(), 2).unwrap();
        // ⟨A1A2⟩ and ⟨A2A1⟩ are the same real moment.
        let w12 = Word {
            alice: vec![(1, 1), (2, 1)],
            bob: vec![],
        };
        let w21 = Word {
            alice: vec![(2, 1), (1, 1)],
            bob: vec![],
        };
        assert_eq!(st.moment_of[&w12.hermitian_rep()], st.moment_of[&w21.hermitian_rep()]);
        // Γ[1, A1] shares its moment with Γ[A1, A1] (projector diagonal).
        let a1 = st.word_index(&Word::alice_single(1, 1));
        assert_eq!(st.entry_moment(0, a1), st.entry_moment(a1, a1));
    }

    #[test]
    fn diagonal_word_products_reduce() {
        // (A1A2)†(A1A2) = A2A1A2: length-3 moment, not the identity.
        let w = Word {
            alice: vec![(1, 1), (2, 1)],
            bob: vec![],
        };
        let prod = adjoint_product(&w, &w).unwrap();
        assert_eq!(prod.alice, vec![(2, 1), (1, 1), (2, 1)]);
        // A(1|1)·A(2|1) = 0 when k = 3 symbols of one setting meet.
        let u = Word::alice_single(1, 1);
        let v = Word::alice_single(1, 2);
        assert!(adjoint_product(&u, &v).is_none());
    }

    #[test]
    fn tsirelson_bound_from_bell_range() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let chsh = canonical_chsh(s22()).unwrap();
        let (lo, hi) = quantum_bell_range(&chsh, &st).unwrap();
        let tsirelson = (2.0f64.sqrt() - 1.0) / 2.0;
        assert!(
            (hi - tsirelson).abs() < 1e-6,
            "level-2 max {hi} vs Tsirelson {tsirelson}"
        );
        assert!(lo < -0.49, "level-2 min {lo}");
    }

    #[test]
    fn q2_accepts_vertices_and_uniform() {
        let st = build_moment_structure(s22(), 2).unwrap();
        for v in enumerate_vertices(s22()).unwrap().iter().step_by(3) {
            let r = q2_membership(v.behavior(), &st).unwrap();
            assert!(r.member, "vertex rejected with margin {}", r.margin);
        }
        let r = q2_membership(&Behavior::uniform(s22()), &st).unwrap();
        assert!(r.member);
    }

    #[test]
    fn q2_isotropic_line_brackets_tsirelson() {
        let st = build_moment_structure(s22(), 2).unwrap();
        // CH value 0.15 → inside; 0.25 → outside (Tsirelson ≈ 0.2071).
        let inside = isotropic(0.65);
        let outside = isotropic(0.75);
        assert!(q2_membership(&inside, &st).unwrap().member);
        let r = q2_membership(&outside, &st).unwrap();
        assert!(!r.member, "margin {}", r.margin);
    }

    #[test]
    fn q2_rejects_pr_box() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let r = q2_membership(&ch_pr_box(), &st).unwrap();
        assert!(!r.member);
        assert!(r.margin > 1e-3);
    }

    #[test]
    fn level_nesting_on_isotropic_line() {
        let st1 = build_moment_structure(s22(), 1).unwrap();
        let st2 = build_moment_structure(s22(), 2).unwrap();
        for i in 0..8 {
            let b = isotropic(0.55 + 0.05 * i as f64);
            let m2 = q2_membership(&b, &st2).unwrap().member;
            let m1 = q2_membership(&b, &st1).unwrap().member;
            if m2 {
                assert!(m1, "level-1 rejected a level-2 member at i={i}");
            }
        }
    }

    #[test]
    fn guessing_curve_matches_analytic_chsh_oracle() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let chsh = canonical_chsh(s22()).unwrap();
        let range = quantum_bell_range(&chsh, &st).unwrap();
        for s_val in [2.0, 2.2, 2.4, 2.6, 2.8, 2.0 * 2.0f64.sqrt()] {
            let bell = (s_val - 2.0) / 4.0;
            let expected = 0.5 + 0.5 * (2.0 - s_val * s_val / 4.0).max(0.0).sqrt();
            let g =
                bound_guessing_probability(bell, &chsh, 1, &st, Some(range)).unwrap();
            assert_eq!(g.status, GuessStatus::Optimal);
            assert!(
                (g.p_guess - expected).abs() < 1e-3,
                "S={s_val}: sdp {} vs analytic {expected}",
                g.p_guess
            );
            assert!(g.gap < TOL_SOLVER_GAP);
        }
    }

    #[test]
    fn classical_bell_value_gives_unit_guessing() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let chsh = canonical_chsh(s22()).unwrap();
        let g = bound_guessing_probability(0.0, &chsh, 1, &st, None).unwrap();
        assert_eq!(g.status, GuessStatus::Optimal);
        assert!((g.p_guess - 1.0).abs() < 1e-6, "p_guess {}", g.p_guess);
    }

    #[test]
    fn super_quantum_bell_value_is_infeasible() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let chsh = canonical_chsh(s22()).unwrap();
        let range = quantum_bell_range(&chsh, &st).unwrap();
        let g = bound_guessing_probability(0.3, &chsh, 1, &st, Some(range)).unwrap();
        assert_eq!(g.status, GuessStatus::Infeasible);
    }

    #[test]
    fn guessing_probability_monotone_in_bell_value() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let chsh = canonical_chsh(s22()).unwrap();
        let range = quantum_bell_range(&chsh, &st).unwrap();
        let mut last = 1.0 + 1e-9;
        for i in 0..=10 {
            let bell = range.1 * i as f64 / 10.0;
            let g = bound_guessing_probability(bell, &chsh, 1, &st, Some(range)).unwrap();
            assert_eq!(g.status, GuessStatus::Optimal);
            assert!(
                g.p_guess <= last + 1e-6,
                "p_guess {} rose past {last} at grid {i}",
                g.p_guess
            );
            assert!(g.p_guess >= 0.5 - 1e-6);
            last = g.p_guess;
        }
    }

    #[test]
    fn block_weights_sum_to_one() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let chsh = canonical_chsh(s22()).unwrap();
        let problem = guessing_problem(0.1, &chsh, 1, &st).unwrap();
        let sol = solve(&problem, &SolverOptions::default()).unwrap();
        let weights = block_weights(&sol);
        let total: f64 = weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-7);
        for w in weights {
            assert!(w >= -1e-9);
        }
    }

    #[test]
    fn bad_setting_rejected() {
        let st = build_moment_structure(s22(), 2).unwrap();
        let chsh = canonical_chsh(s22()).unwrap();
        assert!(matches!(
            guessing_problem(0.1, &chsh, 3, &st),
            Err(NpaError::BadSetting { .. })
        ));
    }
}
