//! Equilibrium machinery: signatures, allowable matchings, pure Nash
//! existence and extraction, best/worst equilibrium selection and best
//! response dynamics.
//!
//! A signature pairs a configuration with a deviation-tendency label for
//! every ordered resource pair: `Le` when an agent sitting at `r` weakly
//! prefers staying over joining `r'`, `Gt` otherwise. All posteriors whose
//! expected costs induce the same signature share their equilibrium set,
//! which is what makes signature enumeration a sound replacement for
//! profile enumeration.

use crate::flow::feasible_assignment;
use crate::game::{ActionProfile, Configuration, CostTable, GameError, Instance};
use crate::scalar::{cmp, Scalar};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("best response dynamics did not settle within {max_rounds} rounds")]
    MaxRoundsExceeded { max_rounds: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Le,
    Gt,
}

/// `(n, labels)`: a configuration plus one label per ordered resource pair.
///
/// Pairs whose source resource is empty carry no information (there is no
/// agent whose deviation they describe, and the comparison would read the
/// undefined `C_r(0)`); they are fixed to `Le` and generate no posterior
/// constraints.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Signature {
    config: Configuration,
    labels: Vec<Label>,
}

impl Signature {
    pub fn new(config: Configuration, labels: Vec<Label>) -> Self {
        let r = config.num_resources();
        assert_eq!(labels.len(), r * r.saturating_sub(1));
        Self { config, labels }
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn pair_index(&self, from: usize, to: usize) -> usize {
        debug_assert_ne!(from, to);
        let r = self.config.num_resources();
        from * (r - 1) + if to > from { to - 1 } else { to }
    }

    pub fn label(&self, from: usize, to: usize) -> Label {
        self.labels[self.pair_index(from, to)]
    }

    /// Ordered pairs whose comparison is well-defined (occupied source);
    /// only these carry posterior constraints.
    pub fn constrained_pairs(&self) -> impl Iterator<Item = (usize, usize, Label)> + '_ {
        let r = self.config.num_resources();
        (0..r)
            .filter(|&from| self.config.count(from) > 0)
            .flat_map(move |from| {
                (0..r)
                    .filter(move |&to| to != from)
                    .map(move |to| (from, to, self.label(from, to)))
            })
    }
}

/// Reads the deviation tendency of every ordered pair off a cost table.
/// Ties label `Le`: an indifferent agent does not deviate.
pub fn signature_of<T: Scalar>(costs: &CostTable<T>, config: &Configuration) -> Signature {
    let r = config.num_resources();
    // Posteriors produced by the solvers sit on region boundaries where
    // the comparison is an exact tie; in float mode the tie must still
    // label Le, so noise within the validation tolerance counts as one.
    let tie = T::validation_tol();
    let mut labels = Vec::with_capacity(r * r.saturating_sub(1));
    for from in 0..r {
        for to in (0..r).filter(|&to| to != from) {
            let label = if config.count(from) == 0 {
                Label::Le
            } else {
                // count(from) >= 1 forces count(to) + 1 <= N.
                let stay = costs.cost(from, config.count(from));
                let join = costs.cost(to, config.count(to) + 1);
                if stay.clone() <= join.clone() + tie.clone() {
                    Label::Le
                } else {
                    Label::Gt
                }
            };
            labels.push(label);
        }
    }
    Signature::new(config.clone(), labels)
}

/// Per-agent resources the signature allows: `i -> r` is allowable iff
/// `r` is in `A_i` and no alternative in `A_i` tempts an agent at `r` away.
pub fn allowable_graph(action_sets: &[Vec<usize>], sig: &Signature) -> Vec<Vec<usize>> {
    action_sets
        .iter()
        .map(|set| {
            set.iter()
                .copied()
                .filter(|&r| {
                    set.iter()
                        .all(|&alt| alt == r || sig.label(r, alt) == Label::Le)
                })
                .collect()
        })
        .collect()
}

/// Matches all agents along equilibrium-allowable edges so that resource
/// `r` receives exactly `n_r` of them. Any returned profile is a pure NE
/// under every cost table inducing the signature.
pub fn find_obeying_assignment<T: Scalar>(
    inst: &Instance<T>,
    sig: &Signature,
) -> Option<ActionProfile> {
    let adjacency = allowable_graph(inst.action_sets(), sig);
    feasible_assignment(&adjacency, sig.config().counts()).map(ActionProfile::new)
}

/// Weak-inequality best-response check of every unilateral deviation.
pub fn is_pure_ne<T: Scalar>(
    costs: &CostTable<T>,
    profile: &ActionProfile,
    action_sets: &[Vec<usize>],
) -> bool {
    deviation_margin(costs, profile, action_sets) <= T::zero()
}

/// Largest improvement any agent can gain by deviating (negative or zero
/// at equilibrium). Scheme validation compares this against a tolerance.
pub fn deviation_margin<T: Scalar>(
    costs: &CostTable<T>,
    profile: &ActionProfile,
    action_sets: &[Vec<usize>],
) -> T {
    let config = profile.configuration(costs.num_resources());
    let mut worst: Option<T> = None;
    for (agent, &mine) in profile.actions().iter().enumerate() {
        let stay = costs.cost(mine, config.count(mine));
        for &alt in &action_sets[agent] {
            if alt == mine {
                continue;
            }
            let join = costs.cost(alt, config.count(alt) + 1);
            let margin = stay.clone() - join.clone();
            if worst.as_ref().is_none_or(|w| margin > *w) {
                worst = Some(margin);
            }
        }
    }
    worst.unwrap_or_else(T::zero)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    Best,
    Worst,
}

/// A pure equilibrium together with its configuration and social cost.
#[derive(Clone, Debug)]
pub struct NashResult<T> {
    pub config: Configuration,
    pub assignment: ActionProfile,
    pub cost: T,
}

/// Enumerates feasible configurations, keeps those whose signature admits
/// an obeying assignment, and returns the cost-minimizing one. Equal costs
/// break toward the lexicographically smaller configuration.
pub fn best_nash<T: Scalar>(
    inst: &Instance<T>,
    costs: &CostTable<T>,
) -> Result<NashResult<T>, GameError> {
    select_nash(inst, costs, Selection::Best)
}

/// As [`best_nash`] but cost-maximizing.
pub fn worst_nash<T: Scalar>(
    inst: &Instance<T>,
    costs: &CostTable<T>,
) -> Result<NashResult<T>, GameError> {
    select_nash(inst, costs, Selection::Worst)
}

pub fn select_nash<T: Scalar>(
    inst: &Instance<T>,
    costs: &CostTable<T>,
    selection: Selection,
) -> Result<NashResult<T>, GameError> {
    let mut chosen: Option<NashResult<T>> = None;
    for config in inst.enumerate_configurations()? {
        let sig = signature_of(costs, &config);
        let Some(assignment) = find_obeying_assignment(inst, &sig) else {
            continue;
        };
        let cost = costs.social_cost(&config);
        let replace = match &chosen {
            None => true,
            Some(current) => match (selection, cmp(&cost, &current.cost)) {
                (Selection::Best, std::cmp::Ordering::Less) => true,
                (Selection::Worst, std::cmp::Ordering::Greater) => true,
                // Enumeration is lexicographic, so the incumbent already
                // wins ties.
                _ => false,
            },
        };
        if replace {
            chosen = Some(NashResult {
                config,
                assignment,
                cost,
            });
        }
    }
    // Rosenthal: the potential minimizer is always an equilibrium, so a
    // configuration must have survived.
    Ok(chosen.expect("a pure Nash equilibrium always exists"))
}

/// Repeatedly moves the lowest-index agent with a strictly improving
/// deviation to its cheapest alternative (lowest index on ties). The
/// potential strictly decreases each step, so this settles at a pure NE.
pub fn best_response_dynamics<T: Scalar>(
    inst: &Instance<T>,
    costs: &CostTable<T>,
    start: &ActionProfile,
    max_rounds: usize,
) -> Result<ActionProfile, EquilibriumError> {
    let mut profile = inst.config_of_profile(start).map(|_| start.clone())?;
    let mut config = profile.configuration(inst.num_resources());
    for _ in 0..max_rounds {
        let mut moved = false;
        for agent in 0..inst.num_agents() {
            let mine = profile.action(agent);
            let stay = costs.cost(mine, config.count(mine)).clone();
            let mut best: Option<(usize, T)> = None;
            for &alt in inst.action_set(agent) {
                if alt == mine {
                    continue;
                }
                let join = costs.cost(alt, config.count(alt) + 1).clone();
                if join < stay {
                    let better = match &best {
                        None => true,
                        Some((_, incumbent)) => join < *incumbent,
                    };
                    if better {
                        best = Some((alt, join));
                    }
                }
            }
            if let Some((alt, _)) = best {
                let mut actions = profile.actions().to_vec();
                actions[agent] = alt;
                profile = ActionProfile::new(actions);
                config = profile.configuration(inst.num_resources());
                moved = true;
                break;
            }
        }
        if !moved {
            return Ok(profile);
        }
    }
    Err(EquilibriumError::MaxRoundsExceeded { max_rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Posterior, State};
    use crate::instances::gen_table1;
    use crate::Rational;
    use num_traits::One;


    fn table1() -> Instance<Rational> {
        gen_table1(None).unwrap()
    }

    fn posterior(a: i64, b: i64, den: i64) -> Posterior<Rational> {
        Posterior::new(vec![Rational::ratio(a, den), Rational::ratio(b, den)]).unwrap()
    }

    #[test]
    fn signature_labels_match_worked_arithmetic() {
        let inst = table1();
        let n21 = Configuration::new(vec![2, 1]);

        let costs = inst.expected_costs(&posterior(6, 4, 10)).unwrap();
        let sig = signature_of(&costs, &n21);
        assert_eq!(sig.label(0, 1), Label::Le); // 1 <= 8
        assert_eq!(sig.label(1, 0), Label::Le); // 7.4 <= 7.6

        let costs = inst.expected_costs(&posterior(0, 1, 1)).unwrap();
        let sig = signature_of(&costs, &n21);
        assert_eq!(sig.label(1, 0), Label::Gt); // 5 > 4
    }

    #[test]
    fn balanced_identical_resources_label_all_le() {
        let inst = Instance::new(
            "sym",
            2,
            vec!["a".into(), "b".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![State {
                name: "s".into(),
                prior: Rational::one(),
                costs: vec![
                    vec![Rational::one(), Rational::from_int(2)],
                    vec![Rational::one(), Rational::from_int(2)],
                ],
            }],
        )
        .unwrap();
        let costs = inst.state_costs(0);
        let sig = signature_of(&costs, &Configuration::new(vec![1, 1]));
        assert!(sig.labels().iter().all(|&l| l == Label::Le));
        // An empty source resource also labels Le by convention.
        let sig = signature_of(&costs, &Configuration::new(vec![2, 0]));
        assert_eq!(sig.label(1, 0), Label::Le);
    }

    #[test]
    fn obeying_assignment_matches_demand() {
        let inst = table1();
        let costs = inst.expected_costs(&posterior(1, 0, 1)).unwrap();
        let n21 = Configuration::new(vec![2, 1]);
        let sig = signature_of(&costs, &n21);
        let profile = find_obeying_assignment(&inst, &sig).unwrap();
        assert_eq!(
            profile.configuration(2),
            Configuration::new(vec![2, 1])
        );
        assert!(is_pure_ne(&costs, &profile, inst.action_sets()));
    }

    #[test]
    fn unreachable_demand_has_no_assignment() {
        let inst = Instance::new(
            "forced",
            2,
            vec!["a".into(), "b".into()],
            vec![vec![0], vec![0]],
            vec![State {
                name: "s".into(),
                prior: Rational::one(),
                costs: vec![
                    vec![Rational::one(), Rational::one()],
                    vec![Rational::one(), Rational::one()],
                ],
            }],
        )
        .unwrap();
        let costs = inst.state_costs(0);
        let sig = signature_of(&costs, &Configuration::new(vec![1, 1]));
        assert!(find_obeying_assignment(&inst, &sig).is_none());
    }

    #[test]
    fn ne_membership_follows_deviation_checks() {
        let inst = table1();
        let profile = ActionProfile::new(vec![0, 0, 1]);

        let costs = inst.expected_costs(&posterior(1, 0, 1)).unwrap();
        assert!(is_pure_ne(&costs, &profile, inst.action_sets()));

        let costs = inst.expected_costs(&posterior(0, 1, 1)).unwrap();
        assert!(!is_pure_ne(&costs, &profile, inst.action_sets()));
    }

    #[test]
    fn crowding_one_resource_is_not_an_equilibrium() {
        let inst = Instance::new(
            "t1",
            2,
            vec!["a".into(), "b".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![State {
                name: "s".into(),
                prior: Rational::one(),
                costs: vec![
                    vec![Rational::one(), Rational::from_int(2)],
                    vec![Rational::one(), Rational::from_int(2)],
                ],
            }],
        )
        .unwrap();
        let costs = inst.state_costs(0);
        assert!(!is_pure_ne(
            &costs,
            &ActionProfile::new(vec![0, 0]),
            inst.action_sets()
        ));
    }

    #[test]
    fn best_nash_reproduces_the_worked_values() {
        let inst = table1();
        for (p, expected_cost, expected_config) in [
            (posterior(1, 0, 1), Rational::from_int(11), vec![2, 1]),
            (posterior(0, 1, 1), Rational::from_int(12), vec![3, 0]),
            (posterior(4, 6, 10), Rational::ratio(96, 5), vec![3, 0]),
            (posterior(6, 4, 10), Rational::ratio(47, 5), vec![2, 1]),
        ] {
            let costs = inst.expected_costs(&p).unwrap();
            let best = best_nash(&inst, &costs).unwrap();
            assert_eq!(best.cost, expected_cost);
            assert_eq!(best.config, Configuration::new(expected_config));
            assert!(is_pure_ne(&costs, &best.assignment, inst.action_sets()));
            let worst = worst_nash(&inst, &costs).unwrap();
            assert!(best.cost <= worst.cost);
            assert!(is_pure_ne(&costs, &worst.assignment, inst.action_sets()));
        }
    }

    #[test]
    fn dynamics_settle_with_decreasing_potential() {
        let inst = table1();
        let costs = inst.expected_costs(&posterior(1, 0, 1)).unwrap();
        let start = ActionProfile::new(vec![1, 1, 1]);
        let settled = best_response_dynamics(&inst, &costs, &start, 100).unwrap();
        assert!(is_pure_ne(&costs, &settled, inst.action_sets()));
        assert_eq!(costs.social_cost(&settled.configuration(2)), Rational::from_int(11));
    }

    #[test]
    fn dynamics_leave_an_equilibrium_alone() {
        let inst = Instance::new(
            "t1",
            2,
            vec!["a".into(), "b".into()],
            vec![vec![0, 1], vec![0, 1]],
            vec![State {
                name: "s".into(),
                prior: Rational::one(),
                costs: vec![
                    vec![Rational::one(), Rational::from_int(2)],
                    vec![Rational::one(), Rational::from_int(2)],
                ],
            }],
        )
        .unwrap();
        let costs = inst.state_costs(0);
        let ne = ActionProfile::new(vec![0, 1]);
        assert_eq!(
            best_response_dynamics(&inst, &costs, &ne, 10).unwrap(),
            ne
        );
        let crowded = ActionProfile::new(vec![0, 0]);
        let settled = best_response_dynamics(&inst, &costs, &crowded, 10).unwrap();
        assert_eq!(settled.configuration(2), Configuration::new(vec![1, 1]));
    }

    #[test]
    fn potential_minimizer_is_an_equilibrium() {
        let inst = table1();
        for p in [posterior(1, 0, 1), posterior(1, 1, 2), posterior(3, 7, 10)] {
            let costs = inst.expected_costs(&p).unwrap();
            let configs = inst.enumerate_configurations().unwrap();
            let min_potential = configs
                .iter()
                .min_by(|a, b| {
                    cmp(&costs.potential(a), &costs.potential(b)).then_with(|| a.cmp(b))
                })
                .unwrap();
            let sig = signature_of(&costs, min_potential);
            let profile = find_obeying_assignment(&inst, &sig).unwrap();
            assert!(is_pure_ne(&costs, &profile, inst.action_sets()));
        }
    }
}
