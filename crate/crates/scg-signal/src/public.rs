//! Optimal public signaling under optimistic equilibrium selection, scheme
//! evaluation under either selection rule, and the full-/no-information
//! baselines.
//!
//! A public scheme is a convex decomposition of the prior into posteriors.
//! Within the polytope of posteriors inducing a fixed signature, the cost
//! of the recommended equilibrium is linear, so signals living in the same
//! region can be merged. The solver therefore enumerates matching-feasible
//! signatures and solves one aggregated program with an unnormalized
//! posterior block per signature, instead of wrapping the weight-adjusted
//! dual problem in an outer cutting-plane loop. The dual object itself
//! ([`best_weighted_posterior`]) is kept as a verification subroutine.

use crate::equilibrium::{
    deviation_margin, find_obeying_assignment, select_nash, Label, Selection,
    Signature,
};
use crate::game::{ActionProfile, Configuration, GameError, Instance, Posterior};
use crate::lp::{solve_lp, LpError, LpSpec, LpStatus};
use crate::scalar::{cmp, Scalar};

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PublicError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{candidates} signature candidates exceed the cap of {cap}")]
    SizeGuard { candidates: u128, cap: u128 },
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
}

#[derive(Clone, Debug)]
pub struct PublicOptions {
    /// Cap on enumerated signature candidates across all configurations.
    pub signature_cap: u128,
    /// Cap forwarded to configuration enumeration.
    pub config_cap: u128,
}

impl Default for PublicOptions {
    fn default() -> Self {
        Self {
            signature_cap: 10_000_000,
            config_cap: crate::game::DEFAULT_CONFIG_CAP,
        }
    }
}

/// One public signal: emission column, induced posterior and the
/// recommended equilibrium at that posterior.
#[derive(Clone, Debug)]
pub struct PublicSignal<T> {
    /// `pi(signal | state)` per state.
    pub emission: Vec<T>,
    /// Marginal probability of the signal.
    pub probability: T,
    pub posterior: Posterior<T>,
    pub config: Configuration,
    pub assignment: ActionProfile,
    /// Social cost of the recommended equilibrium under the posterior.
    pub expected_cost: T,
}

#[derive(Clone, Debug)]
pub struct PublicScheme<T> {
    pub signals: Vec<PublicSignal<T>>,
}

impl<T: Scalar> PublicScheme<T> {
    pub fn num_signals(&self) -> usize {
        self.signals.len()
    }

    /// Expected cost across signals as recommended (optimistic value).
    pub fn value(&self) -> T {
        self.signals
            .iter()
            .map(|s| s.probability.clone() * s.expected_cost.clone())
            .sum()
    }
}

/// Checks emission normalization, posterior consistency, prior
/// decomposition and that each recommendation is an equilibrium at its
/// posterior, all within `tol`.
pub fn validate_scheme<T: Scalar>(
    inst: &Instance<T>,
    scheme: &PublicScheme<T>,
    tol: &T,
) -> Result<(), PublicError> {
    let bad = |msg: String| Err(PublicError::InvalidScheme(msg));
    if scheme.signals.is_empty() {
        return bad("scheme has no signals".into());
    }
    let prior = inst.prior();
    for (k, signal) in scheme.signals.iter().enumerate() {
        if signal.emission.len() != inst.num_states()
            || signal.posterior.num_states() != inst.num_states()
        {
            return bad(format!("signal {k}: state dimension mismatch"));
        }
        if signal.probability < -tol.clone() {
            return bad(format!("signal {k}: negative probability"));
        }
        let mass: T = signal.emission.iter().enumerate().map(|(th, e)| {
            prior.prob(th).clone() * e.clone()
        }).sum();
        if (mass.clone() - signal.probability.clone()).abs() > *tol {
            return bad(format!(
                "signal {k}: stored probability disagrees with emission mass"
            ));
        }
        for th in 0..inst.num_states() {
            let lhs = signal.posterior.prob(th).clone() * signal.probability.clone();
            let rhs = prior.prob(th).clone() * signal.emission[th].clone();
            if (lhs - rhs).abs() > *tol {
                return bad(format!("signal {k}: posterior inconsistent at state {th}"));
            }
        }
        let config = inst.config_of_profile(&signal.assignment).map_err(|e| {
            PublicError::InvalidScheme(format!("signal {k}: bad assignment: {e}"))
        })?;
        if config != signal.config {
            return bad(format!(
                "signal {k}: assignment does not realize the recommended configuration"
            ));
        }
        let costs = inst.expected_costs(&signal.posterior)?;
        if deviation_margin(&costs, &signal.assignment, inst.action_sets()) > *tol {
            return bad(format!(
                "signal {k}: recommended profile is not an equilibrium at its posterior"
            ));
        }
    }
    for th in 0..inst.num_states() {
        let total: T = scheme.signals.iter().map(|s| s.emission[th].clone()).sum();
        if (total - T::one()).abs() > *tol {
            return bad(format!("state {th}: emissions do not sum to 1"));
        }
        let recomposed: T = scheme
            .signals
            .iter()
            .map(|s| s.probability.clone() * s.posterior.prob(th).clone())
            .sum();
        if (recomposed - prior.prob(th).clone()).abs() > *tol {
            return bad(format!("state {th}: posteriors do not decompose the prior"));
        }
    }
    Ok(())
}

/// Social cost of configuration `n` in state `theta` as a coefficient
/// vector over posterior entries.
fn cost_coeffs<T: Scalar>(inst: &Instance<T>, config: &Configuration) -> Vec<T> {
    (0..inst.num_states())
        .map(|th| inst.state_social_cost(th, config))
        .collect()
}

/// Incentive rows of a signature, oriented as `coeffs . p <= 0`.
fn signature_rows<T: Scalar>(inst: &Instance<T>, sig: &Signature) -> Vec<Vec<(usize, T)>> {
    let config = sig.config();
    let mut rows = Vec::new();
    for (from, to, label) in sig.constrained_pairs() {
        let row: Vec<(usize, T)> = (0..inst.num_states())
            .map(|th| {
                let stay = inst.cost(th, from, config.count(from)).clone();
                let join = inst.cost(th, to, config.count(to) + 1).clone();
                let delta = stay - join;
                (
                    th,
                    match label {
                        Label::Le => delta,
                        Label::Gt => -delta,
                    },
                )
            })
            .collect();
        rows.push(row);
    }
    rows
}

fn solve_posterior_program<T: Scalar>(
    inst: &Instance<T>,
    weights: &[T],
    objective_costs: &[T],
    incentive_rows: Vec<Vec<(usize, T)>>,
) -> Result<Option<(Posterior<T>, T)>, PublicError> {
    let k = inst.num_states();
    let mut spec = LpSpec::new(k);
    for th in 0..k {
        spec.set_objective(th, objective_costs[th].clone() + weights[th].clone());
    }
    for row in incentive_rows {
        spec.add_le(row, T::zero());
    }
    spec.add_eq((0..k).map(|th| (th, T::one())).collect(), T::one());
    let sol = solve_lp(&spec)?;
    match sol.status {
        LpStatus::Optimal => Ok(Some((Posterior::new_unchecked(sol.x), sol.objective))),
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(PublicError::Lp(LpError::BadSpec(
            "posterior program cannot be unbounded".into(),
        ))),
    }
}

/// Minimizes the weight-adjusted cost over posteriors that make `profile`
/// an equilibrium; `None` when no posterior does.
pub fn per_profile_lp<T: Scalar>(
    inst: &Instance<T>,
    weights: &[T],
    profile: &ActionProfile,
) -> Result<Option<(Posterior<T>, T)>, PublicError> {
    let config = inst.config_of_profile(profile)?;
    let mut rows = Vec::new();
    for (agent, &mine) in profile.actions().iter().enumerate() {
        for &alt in inst.action_set(agent) {
            if alt == mine {
                continue;
            }
            let row: Vec<(usize, T)> = (0..inst.num_states())
                .map(|th| {
                    let stay = inst.cost(th, mine, config.count(mine)).clone();
                    let join = inst.cost(th, alt, config.count(alt) + 1).clone();
                    (th, stay - join)
                })
                .collect();
            rows.push(row);
        }
    }
    solve_posterior_program(inst, weights, &cost_coeffs(inst, &config), rows)
}

/// Minimizes the weight-adjusted cost over posteriors categorized into the
/// signature; `None` when its polytope is empty.
pub fn per_signature_lp<T: Scalar>(
    inst: &Instance<T>,
    weights: &[T],
    sig: &Signature,
) -> Result<Option<(Posterior<T>, T)>, PublicError> {
    solve_posterior_program(
        inst,
        weights,
        &cost_coeffs(inst, sig.config()),
        signature_rows(inst, sig),
    )
}

/// Enumerates signatures that admit an obeying assignment, in
/// deterministic order (configurations lexicographic, labels counting up
/// with `Le` before `Gt` on the constrained pairs).
///
/// Label assignments where two occupied resources point `Gt` at each other
/// are skipped outright: both populations would want to swap, so no
/// equilibrium obeys such a signature.
pub fn feasible_signatures<T: Scalar>(
    inst: &Instance<T>,
    opts: &PublicOptions,
) -> Result<Vec<(Signature, ActionProfile)>, PublicError> {
    let configs = inst.enumerate_configurations_capped(opts.config_cap)?;
    let r = inst.num_resources();

    let mut candidates: u128 = 0;
    for config in &configs {
        let occupied = config.occupied().count() as u32;
        candidates = candidates.saturating_add(1u128 << (occupied * (r as u32 - 1)).min(126));
    }
    if candidates > opts.signature_cap {
        return Err(PublicError::SizeGuard {
            candidates,
            cap: opts.signature_cap,
        });
    }

    let mut out = Vec::new();
    for config in &configs {
        let pairs: Vec<(usize, usize)> = (0..r)
            .filter(|&from| config.count(from) > 0)
            .flat_map(|from| (0..r).filter(move |&to| to != from).map(move |to| (from, to)))
            .collect();
        let k = pairs.len();
        'candidate: for mask in 0u64..(1u64 << k) {
            let mut labels = vec![Label::Le; r * (r - 1)];
            for (bit, &(from, to)) in pairs.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    let idx = from * (r - 1) + if to > from { to - 1 } else { to };
                    labels[idx] = Label::Gt;
                }
            }
            let sig = Signature::new(config.clone(), labels);
            // Two occupied resources pointing Gt at each other bound an
            // empty region: monotone costs cannot satisfy both strict
            // comparisons at once.
            for (bit, &(from, to)) in pairs.iter().enumerate() {
                if mask >> bit & 1 == 1
                    && to < from
                    && config.count(to) > 0
                    && sig.label(to, from) == Label::Gt
                {
                    continue 'candidate;
                }
            }
            if let Some(assignment) = find_obeying_assignment(inst, &sig) {
                out.push((sig, assignment));
            }
        }
    }
    Ok(out)
}

/// The best weight-adjusted posterior: minimizes expected social cost of
/// the recommended equilibrium plus `w . p` over all posteriors, by
/// scanning every feasible signature's program and keeping the smallest
/// objective (ties break toward the earlier signature).
pub fn best_weighted_posterior<T: Scalar>(
    inst: &Instance<T>,
    weights: &[T],
    opts: &PublicOptions,
) -> Result<(Posterior<T>, Signature, T), PublicError> {
    let sigs = feasible_signatures(inst, opts)?;
    let solved: Vec<Option<(Posterior<T>, T)>> = sigs
        .par_iter()
        .map(|(sig, _)| per_signature_lp(inst, weights, sig))
        .collect::<Result<_, _>>()?;
    let mut best: Option<(usize, Posterior<T>, T)> = None;
    for (idx, outcome) in solved.into_iter().enumerate() {
        let Some((posterior, objective)) = outcome else {
            continue;
        };
        let replace = match &best {
            None => true,
            Some((_, _, incumbent)) => cmp(&objective, incumbent) == std::cmp::Ordering::Less,
        };
        if replace {
            best = Some((idx, posterior, objective));
        }
    }
    let (idx, posterior, objective) =
        best.expect("at least one signature region is always non-empty");
    Ok((posterior, sigs[idx].0.clone(), objective))
}

/// Computes the social-cost-minimizing public scheme under optimistic
/// equilibrium selection, as one aggregated program: an unnormalized
/// posterior block per feasible signature, the signature's incentive rows
/// made homogeneous, and a coupling row per state pinning total mass to
/// the prior.
pub fn solve_optimal_public<T: Scalar>(
    inst: &Instance<T>,
    opts: &PublicOptions,
) -> Result<(PublicScheme<T>, T), PublicError> {
    let sigs = feasible_signatures(inst, opts)?;
    let k = inst.num_states();
    let prior = inst.prior();

    let mut spec = LpSpec::new(sigs.len() * k);
    for (s, (sig, _)) in sigs.iter().enumerate() {
        let costs = cost_coeffs(inst, sig.config());
        for th in 0..k {
            spec.set_objective(s * k + th, costs[th].clone());
        }
        for row in signature_rows(inst, sig) {
            spec.add_le(
                row.into_iter().map(|(th, c)| (s * k + th, c)).collect(),
                T::zero(),
            );
        }
    }
    for th in 0..k {
        spec.add_eq(
            (0..sigs.len()).map(|s| (s * k + th, T::one())).collect(),
            prior.prob(th).clone(),
        );
    }

    let sol = solve_lp(&spec)?;
    if sol.status != LpStatus::Optimal {
        // Full information decomposes the prior across signature regions,
        // so the program is feasible and bounded by construction.
        return Err(PublicError::Lp(LpError::BadSpec(format!(
            "aggregated public program reported {:?}",
            sol.status
        ))));
    }

    let drop_tol = if T::EXACT {
        T::zero()
    } else {
        T::ratio(1, 1_000_000_000_000)
    };
    let mut signals = Vec::new();
    for (s, (sig, assignment)) in sigs.iter().enumerate() {
        let block = &sol.x[s * k..(s + 1) * k];
        let mass: T = block.iter().cloned().sum();
        if mass <= drop_tol {
            continue;
        }
        let posterior =
            Posterior::new_unchecked(block.iter().map(|y| y.clone() / mass.clone()).collect());
        let expected_cost: T = (0..k)
            .map(|th| posterior.prob(th).clone() * inst.state_social_cost(th, sig.config()))
            .sum();
        let emission: Vec<T> = (0..k)
            .map(|th| {
                if prior.prob(th).is_zero() {
                    mass.clone()
                } else {
                    block[th].clone() / prior.prob(th).clone()
                }
            })
            .collect();
        signals.push(PublicSignal {
            emission,
            probability: mass,
            posterior,
            config: sig.config().clone(),
            assignment: assignment.clone(),
            expected_cost,
        });
    }

    // Dropping sub-threshold signals sheds a little mass in float mode;
    // scale probabilities and emissions back to exact distributions.
    let total: T = signals.iter().map(|s| s.probability.clone()).sum();
    if total != T::one() {
        for signal in &mut signals {
            signal.probability = signal.probability.clone() / total.clone();
        }
    }
    for th in 0..k {
        let col: T = signals.iter().map(|s| s.emission[th].clone()).sum();
        if !col.is_zero() && col != T::one() {
            for signal in &mut signals {
                signal.emission[th] = signal.emission[th].clone() / col.clone();
            }
        }
    }

    let scheme = PublicScheme { signals };
    let value = scheme.value();
    Ok((scheme, value))
}

/// Expected cost of a (validated) scheme when each signal's game is played
/// at the selected pure equilibrium.
pub fn evaluate_public_scheme<T: Scalar>(
    inst: &Instance<T>,
    scheme: &PublicScheme<T>,
    selection: Selection,
) -> Result<T, PublicError> {
    let tol = if T::EXACT {
        T::zero()
    } else {
        T::ratio(1, 10_000_000)
    };
    validate_scheme(inst, scheme, &tol)?;
    let mut total = T::zero();
    for signal in &scheme.signals {
        if signal.probability.is_zero() {
            continue;
        }
        let costs = inst.expected_costs(&signal.posterior)?;
        let nash = select_nash(inst, &costs, selection)?;
        total += signal.probability.clone() * nash.cost;
    }
    Ok(total)
}

/// One signal per positive-prior state, each with a point-mass posterior.
pub fn full_info_scheme<T: Scalar>(inst: &Instance<T>) -> Result<PublicScheme<T>, PublicError> {
    let prior = inst.prior();
    let k = inst.num_states();
    let mut signals = Vec::new();
    for th in 0..k {
        if prior.prob(th).is_zero() {
            continue;
        }
        let posterior = Posterior::point(k, th);
        let costs = inst.expected_costs(&posterior)?;
        let nash = select_nash(inst, &costs, Selection::Best)?;
        let emission: Vec<T> = (0..k)
            .map(|other| {
                if other == th {
                    T::one()
                } else if prior.prob(other).is_zero() {
                    // Zero-prior states never emit; give them the signal's
                    // marginal so their emission row still sums to one.
                    prior.prob(th).clone()
                } else {
                    T::zero()
                }
            })
            .collect();
        signals.push(PublicSignal {
            emission,
            probability: prior.prob(th).clone(),
            posterior,
            config: nash.config,
            assignment: nash.assignment,
            expected_cost: nash.cost,
        });
    }
    Ok(PublicScheme { signals })
}

/// A single uninformative signal whose posterior is the prior.
pub fn no_info_scheme<T: Scalar>(inst: &Instance<T>) -> Result<PublicScheme<T>, PublicError> {
    let prior = inst.prior();
    let costs = inst.expected_costs(&prior)?;
    let nash = select_nash(inst, &costs, Selection::Best)?;
    Ok(PublicScheme {
        signals: vec![PublicSignal {
            emission: vec![T::one(); inst.num_states()],
            probability: T::one(),
            posterior: prior,
            config: nash.config,
            assignment: nash.assignment,
            expected_cost: nash.cost,
        }],
    })
}
