//! Immutable game model: instances, configurations, action profiles,
//! posterior-expected cost tables, social cost and the potential function.

use crate::flow::feasible_assignment;
use crate::scalar::Scalar;

use thiserror::Error;

/// Number of feasible-configuration candidates tolerated before
/// enumeration refuses to run.
pub const DEFAULT_CONFIG_CAP: u128 = 10_000_000;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("priors sum to {sum}, not 1")]
    PriorNotNormalized { sum: String },
    #[error("state {state} resource {resource}: cost decreases from n={n} to n={}", n + 1)]
    CostNotMonotone {
        state: usize,
        resource: usize,
        n: usize,
    },
    #[error("agent {agent} has an empty action set")]
    EmptyActionSet { agent: usize },
    #[error("state {state} resource {resource}: negative cost at n={n}")]
    NegativeCost {
        state: usize,
        resource: usize,
        n: usize,
    },
    #[error("{0}")]
    DimensionMismatch(String),
    #[error("agent {agent}: action {resource} is outside its action set")]
    InvalidAction { agent: usize, resource: usize },
    #[error("{candidates} configuration candidates exceed the cap of {cap}")]
    SizeGuard { candidates: u128, cap: u128 },
}

/// Per-resource agent counts; always sums to the agent count.
///
/// The derived `Ord` is lexicographic, which is the tie-breaking order used
/// throughout the solvers.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration(Vec<usize>);

impl Configuration {
    pub fn new(counts: Vec<usize>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn count(&self, resource: usize) -> usize {
        self.0[resource]
    }

    pub fn num_resources(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Resources with at least one agent.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.0.len()).filter(move |&r| self.0[r] > 0)
    }
}

/// One resource choice per agent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionProfile(Vec<usize>);

impl ActionProfile {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, agent: usize) -> usize {
        self.0[agent]
    }

    pub fn num_agents(&self) -> usize {
        self.0.len()
    }

    /// Counts per resource.
    pub fn configuration(&self, num_resources: usize) -> Configuration {
        let mut counts = vec![0usize; num_resources];
        for &r in &self.0 {
            counts[r] += 1;
        }
        Configuration(counts)
    }
}

/// A distribution over states.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior<T>(Vec<T>);

impl<T: Scalar> Posterior<T> {
    pub fn new(probs: Vec<T>) -> Result<Self, GameError> {
        check_distribution(&probs, "posterior")?;
        Ok(Self(probs))
    }

    /// Point mass on one state.
    pub fn point(num_states: usize, state: usize) -> Self {
        let mut probs = vec![T::zero(); num_states];
        probs[state] = T::one();
        Self(probs)
    }

    /// Skips the normalization check; for callers that already hold a
    /// validated distribution.
    pub fn new_unchecked(probs: Vec<T>) -> Self {
        Self(probs)
    }

    pub fn probs(&self) -> &[T] {
        &self.0
    }

    pub fn prob(&self, state: usize) -> &T {
        &self.0[state]
    }

    pub fn num_states(&self) -> usize {
        self.0.len()
    }
}

fn check_distribution<T: Scalar>(probs: &[T], what: &str) -> Result<(), GameError> {
    if probs.is_empty() {
        return Err(GameError::DimensionMismatch(format!("empty {what}")));
    }
    for (i, p) in probs.iter().enumerate() {
        if *p < T::zero() {
            return Err(GameError::DimensionMismatch(format!(
                "{what}[{i}] is negative"
            )));
        }
    }
    let sum: T = probs.iter().cloned().sum();
    if (sum.clone() - T::one()).abs() > T::validation_tol() {
        return Err(GameError::PriorNotNormalized {
            sum: sum.to_string(),
        });
    }
    Ok(())
}

/// Expected congestion per resource, indexed by load `n = 1..=N`.
///
/// `n = 0` is intentionally absent: empty resources contribute nothing to
/// the social cost, and deviation targets only ever look up `n + 1 <= N`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable<T> {
    values: Vec<Vec<T>>,
}

impl<T: Scalar> CostTable<T> {
    pub fn new(values: Vec<Vec<T>>) -> Self {
        Self { values }
    }

    pub fn num_resources(&self) -> usize {
        self.values.len()
    }

    pub fn num_agents(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Cost at resource `r` with `n` agents on it, `1 <= n <= N`.
    pub fn cost(&self, resource: usize, n: usize) -> &T {
        assert!(n >= 1, "cost tables are indexed from n = 1");
        &self.values[resource][n - 1]
    }

    /// Total cost of a configuration: occupied resources contribute
    /// `n_r * C_r(n_r)`, empty ones contribute zero.
    pub fn social_cost(&self, config: &Configuration) -> T {
        let mut total = T::zero();
        for r in config.occupied() {
            let n = config.count(r);
            total += T::from_int(n as i64) * self.cost(r, n).clone();
        }
        total
    }

    /// Rosenthal potential: sum of `C_r(1) + ... + C_r(n_r)` over resources.
    pub fn potential(&self, config: &Configuration) -> T {
        let mut total = T::zero();
        for r in config.occupied() {
            for j in 1..=config.count(r) {
                total += self.cost(r, j).clone();
            }
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    pub name: String,
    pub prior: T,
    /// `costs[resource][n - 1]` for `n = 1..=N`.
    pub costs: Vec<Vec<T>>,
}

/// A singleton congestion game with an uncertain state of nature.
///
/// Validated on construction and immutable afterwards; every operation on
/// it is a pure function.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<T> {
    name: String,
    num_agents: usize,
    resources: Vec<String>,
    action_sets: Vec<Vec<usize>>,
    states: Vec<State<T>>,
}

impl<T: Scalar> Instance<T> {
    /// Validates all model invariants and normalizes action sets (sorted,
    /// deduplicated). State order is kept as given.
    pub fn new(
        name: impl Into<String>,
        num_agents: usize,
        resources: Vec<String>,
        action_sets: Vec<Vec<usize>>,
        states: Vec<State<T>>,
    ) -> Result<Self, GameError> {
        if num_agents == 0 {
            return Err(GameError::DimensionMismatch("num_agents must be >= 1".into()));
        }
        if resources.is_empty() {
            return Err(GameError::DimensionMismatch("no resources".into()));
        }
        if states.is_empty() {
            return Err(GameError::DimensionMismatch("no states".into()));
        }
        if action_sets.len() != num_agents {
            return Err(GameError::DimensionMismatch(format!(
                "{} action sets for {} agents",
                action_sets.len(),
                num_agents
            )));
        }
        let mut normalized_sets = Vec::with_capacity(num_agents);
        for (agent, set) in action_sets.into_iter().enumerate() {
            let mut set = set;
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(GameError::EmptyActionSet { agent });
            }
            if let Some(&resource) = set.iter().find(|&&r| r >= resources.len()) {
                return Err(GameError::InvalidAction { agent, resource });
            }
            normalized_sets.push(set);
        }
        let priors: Vec<T> = states.iter().map(|s| s.prior.clone()).collect();
        check_distribution(&priors, "prior")?;
        for (state_idx, state) in states.iter().enumerate() {
            if state.costs.len() != resources.len() {
                return Err(GameError::DimensionMismatch(format!(
                    "state {state_idx}: {} cost rows for {} resources",
                    state.costs.len(),
                    resources.len()
                )));
            }
            for (resource, row) in state.costs.iter().enumerate() {
                if row.len() != num_agents {
                    return Err(GameError::DimensionMismatch(format!(
                        "state {state_idx} resource {resource}: {} cost entries for {} agents",
                        row.len(),
                        num_agents
                    )));
                }
                for (j, value) in row.iter().enumerate() {
                    if *value < T::zero() {
                        return Err(GameError::NegativeCost {
                            state: state_idx,
                            resource,
                            n: j + 1,
                        });
                    }
                }
                for j in 0..num_agents - 1 {
                    if row[j + 1] < row[j] {
                        return Err(GameError::CostNotMonotone {
                            state: state_idx,
                            resource,
                            n: j + 1,
                        });
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            num_agents,
            resources,
            action_sets: normalized_sets,
            states,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn resources(&self) -> &[String] {
        &self.resources
    }

    pub fn states(&self) -> &[State<T>] {
        &self.states
    }

    pub fn action_sets(&self) -> &[Vec<usize>] {
        &self.action_sets
    }

    pub fn action_set(&self, agent: usize) -> &[usize] {
        &self.action_sets[agent]
    }

    pub fn prior(&self) -> Posterior<T> {
        Posterior(self.states.iter().map(|s| s.prior.clone()).collect())
    }

    /// True when all agents share the same action set.
    pub fn is_symmetric(&self) -> bool {
        self.action_sets
            .windows(2)
            .all(|pair| pair[0] == pair[1])
    }

    /// Cost of resource `r` with `n >= 1` agents in state `theta`.
    pub fn cost(&self, state: usize, resource: usize, n: usize) -> &T {
        assert!(n >= 1, "cost tables are indexed from n = 1");
        &self.states[state].costs[resource][n - 1]
    }

    /// The cost table of a single state (a point-mass posterior).
    pub fn state_costs(&self, state: usize) -> CostTable<T> {
        CostTable::new(self.states[state].costs.clone())
    }

    /// Posterior-expected cost table: `C_r(n) = sum_theta p_theta * c_r^theta(n)`.
    pub fn expected_costs(&self, posterior: &Posterior<T>) -> Result<CostTable<T>, GameError> {
        if posterior.num_states() != self.num_states() {
            return Err(GameError::DimensionMismatch(format!(
                "posterior over {} states for an instance with {}",
                posterior.num_states(),
                self.num_states()
            )));
        }
        let mut values = vec![vec![T::zero(); self.num_agents]; self.num_resources()];
        for (state, p) in posterior.probs().iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            for (r, row) in self.states[state].costs.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    values[r][j] += p.clone() * c.clone();
                }
            }
        }
        Ok(CostTable::new(values))
    }

    /// Per-state social cost of a configuration.
    pub fn state_social_cost(&self, state: usize, config: &Configuration) -> T {
        let mut total = T::zero();
        for r in config.occupied() {
            let n = config.count(r);
            total += T::from_int(n as i64) * self.cost(state, r, n).clone();
        }
        total
    }

    /// Counts agents per resource; rejects actions outside the action sets.
    pub fn config_of_profile(&self, profile: &ActionProfile) -> Result<Configuration, GameError> {
        if profile.num_agents() != self.num_agents {
            return Err(GameError::DimensionMismatch(format!(
                "profile for {} agents in a game with {}",
                profile.num_agents(),
                self.num_agents
            )));
        }
        for (agent, &resource) in profile.actions().iter().enumerate() {
            if !self.action_sets[agent].contains(&resource) {
                return Err(GameError::InvalidAction { agent, resource });
            }
        }
        Ok(profile.configuration(self.num_resources()))
    }

    /// True when some assignment with `a_i` in `A_i` realizes `config`.
    pub fn config_is_feasible(&self, config: &Configuration) -> bool {
        config.total() == self.num_agents
            && feasible_assignment(&self.action_sets, config.counts()).is_some()
    }

    /// All feasible configurations in lexicographic order.
    pub fn enumerate_configurations(&self) -> Result<Vec<Configuration>, GameError> {
        self.enumerate_configurations_capped(DEFAULT_CONFIG_CAP)
    }

    /// As [`Self::enumerate_configurations`] with an explicit candidate cap.
    pub fn enumerate_configurations_capped(
        &self,
        cap: u128,
    ) -> Result<Vec<Configuration>, GameError> {
        let candidates = compositions_count(self.num_agents, self.num_resources());
        if candidates > cap {
            return Err(GameError::SizeGuard { candidates, cap });
        }
        let mut out = Vec::new();
        let mut current = vec![0usize; self.num_resources()];
        self.enumerate_rec(0, self.num_agents, &mut current, &mut out);
        Ok(out)
    }

    fn enumerate_rec(
        &self,
        resource: usize,
        remaining: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Configuration>,
    ) {
        if resource + 1 == self.num_resources() {
            current[resource] = remaining;
            let config = Configuration(current.clone());
            if self.config_is_feasible(&config) {
                out.push(config);
            }
            current[resource] = 0;
            return;
        }
        for count in 0..=remaining {
            current[resource] = count;
            self.enumerate_rec(resource + 1, remaining - count, current, out);
        }
        current[resource] = 0;
    }

    /// Converts every numeric field into another scalar type, exactly when
    /// the target can represent the source.
    pub fn map_scalar<U: Scalar>(&self) -> Instance<U> {
        Instance {
            name: self.name.clone(),
            num_agents: self.num_agents,
            resources: self.resources.clone(),
            action_sets: self.action_sets.clone(),
            states: self
                .states
                .iter()
                .map(|s| State {
                    name: s.name.clone(),
                    prior: U::from_rational(&s.prior.to_rational()),
                    costs: s
                        .costs
                        .iter()
                        .map(|row| row.iter().map(|c| U::from_rational(&c.to_rational())).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

/// `C(n + r - 1, r - 1)`: compositions of `n` into `r` non-negative parts.
pub fn compositions_count(n: usize, r: usize) -> u128 {
    let mut result: u128 = 1;
    for k in 1..r {
        result = result.saturating_mul((n + k) as u128) / k as u128;
    }
    result
}
