//! Test-side oracles, deliberately independent of the solver paths they
//! cross-check: brute-force equilibrium enumeration over whole profile
//! spaces, and the naive per-profile aggregation for public signaling.

#![allow(dead_code)]

use scg_signal::equilibrium::is_pure_ne;
use scg_signal::game::{ActionProfile, Configuration, CostTable, Instance, Posterior};
use scg_signal::lp::{solve_lp, LpSpec, LpStatus};
use scg_signal::scalar::Scalar;

/// Every action profile, enumerated directly from the action sets.
pub fn all_profiles<T: Scalar>(inst: &Instance<T>) -> Vec<ActionProfile> {
    let mut out = Vec::new();
    let mut current = vec![0usize; inst.num_agents()];
    fn rec<T: Scalar>(
        inst: &Instance<T>,
        agent: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<ActionProfile>,
    ) {
        if agent == inst.num_agents() {
            out.push(ActionProfile::new(current.clone()));
            return;
        }
        for &r in inst.action_set(agent) {
            current[agent] = r;
            rec(inst, agent + 1, current, out);
        }
    }
    rec(inst, 0, &mut current, &mut out);
    out
}

/// Configurations of pure equilibria found by checking every profile.
pub fn brute_force_ne_configs<T: Scalar>(
    inst: &Instance<T>,
    costs: &CostTable<T>,
) -> std::collections::BTreeSet<Configuration> {
    all_profiles(inst)
        .into_iter()
        .filter(|a| is_pure_ne(costs, a, inst.action_sets()))
        .map(|a| a.configuration(inst.num_resources()))
        .collect()
}

/// The configurations the signature-and-matching machinery declares to be
/// equilibrium configurations.
pub fn signature_ne_configs<T: Scalar>(
    inst: &Instance<T>,
    costs: &CostTable<T>,
) -> std::collections::BTreeSet<Configuration> {
    inst.enumerate_configurations()
        .unwrap()
        .into_iter()
        .filter(|config| {
            let sig = scg_signal::equilibrium::signature_of(costs, config);
            scg_signal::equilibrium::find_obeying_assignment(inst, &sig).is_some()
        })
        .collect()
}

/// The naive public-signaling optimum: one unnormalized posterior block
/// per action profile, with that profile's equilibrium constraints, glued
/// by prior-decomposition rows. Built straight from the instance data so
/// it shares nothing with the signature machinery it cross-checks.
pub fn per_profile_public_oracle<T: Scalar>(inst: &Instance<T>) -> T {
    let profiles = all_profiles(inst);
    let k = inst.num_states();
    let var = |a_idx: usize, th: usize| a_idx * k + th;
    let mut spec = LpSpec::new(profiles.len() * k);
    for (a_idx, profile) in profiles.iter().enumerate() {
        let config = profile.configuration(inst.num_resources());
        for th in 0..k {
            spec.set_objective(var(a_idx, th), inst.state_social_cost(th, &config));
        }
        for (agent, &mine) in profile.actions().iter().enumerate() {
            for &alt in inst.action_set(agent) {
                if alt == mine {
                    continue;
                }
                let row: Vec<(usize, T)> = (0..k)
                    .map(|th| {
                        let stay = inst.cost(th, mine, config.count(mine)).clone();
                        let join = inst.cost(th, alt, config.count(alt) + 1).clone();
                        (var(a_idx, th), stay - join)
                    })
                    .collect();
                spec.add_le(row, T::zero());
            }
        }
    }
    let prior = inst.prior();
    for th in 0..k {
        spec.add_eq(
            (0..profiles.len()).map(|a| (var(a, th), T::one())).collect(),
            prior.prob(th).clone(),
        );
    }
    let sol = solve_lp(&spec).expect("oracle program solves");
    assert_eq!(sol.status, LpStatus::Optimal, "oracle program is feasible");
    sol.objective
}

/// Grid over the probability simplex with the given number of steps.
pub fn grid_posteriors<T: Scalar>(num_states: usize, steps: usize) -> Vec<Posterior<T>> {
    let mut out = Vec::new();
    let mut counts = vec![0usize; num_states];
    fn rec<T: Scalar>(
        idx: usize,
        remaining: usize,
        steps: usize,
        counts: &mut Vec<usize>,
        out: &mut Vec<Posterior<T>>,
    ) {
        if idx + 1 == counts.len() {
            counts[idx] = remaining;
            out.push(Posterior::new_unchecked(
                counts
                    .iter()
                    .map(|&c| T::ratio(c as i64, steps as i64))
                    .collect(),
            ));
            return;
        }
        for c in 0..=remaining {
            counts[idx] = c;
            rec(idx + 1, remaining - c, steps, counts, out);
        }
    }
    rec(0, steps, steps, &mut counts, &mut out);
    out
}

/// Best response dynamics replayed independently: lowest-index agent with
/// a strict improvement moves to its cheapest resource (lowest index on
/// ties). Returns the trajectory of visited profiles, the start included.
pub fn replay_best_response<T: Scalar>(
    inst: &Instance<T>,
    costs: &CostTable<T>,
    start: &ActionProfile,
    max_rounds: usize,
) -> Vec<ActionProfile> {
    let mut trajectory = vec![start.clone()];
    let mut profile = start.clone();
    for _ in 0..max_rounds {
        let config = profile.configuration(inst.num_resources());
        let mut next: Option<ActionProfile> = None;
        for agent in 0..inst.num_agents() {
            let mine = profile.action(agent);
            let stay = costs.cost(mine, config.count(mine)).clone();
            let mut best: Option<(usize, T)> = None;
            for &alt in inst.action_set(agent) {
                if alt == mine {
                    continue;
                }
                let join = costs.cost(alt, config.count(alt) + 1).clone();
                if join < stay && best.as_ref().is_none_or(|(_, b)| join < *b) {
                    best = Some((alt, join));
                }
            }
            if let Some((alt, _)) = best {
                let mut actions = profile.actions().to_vec();
                actions[agent] = alt;
                next = Some(ActionProfile::new(actions));
                break;
            }
        }
        match next {
            Some(p) => {
                trajectory.push(p.clone());
                profile = p;
            }
            None => return trajectory,
        }
    }
    panic!("best response dynamics did not settle within {max_rounds} rounds");
}
