//! Instance generators (worked fixtures, random families, the
//! graph-based hard family), the color-revealing public scheme, and
//! file-format serialization.

pub mod io;

use crate::equilibrium::best_nash;
use crate::game::{ActionProfile, Configuration, GameError, Instance, Posterior, State};
use crate::private::ExplicitScheme;
use crate::public::{PublicScheme, PublicSignal};
use crate::scalar::Scalar;
use crate::Rational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstancesError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("agent count (1 - eps) / q * R = {0} is not a positive integer")]
    NonIntegerAgentCount(String),
    #[error("graph invariant violated: {0}")]
    GraphInvariantViolated(String),
    #[error("color class {class} has {size} vertices, expected exactly {expected} agents")]
    ClassSizeMismatch {
        class: usize,
        size: usize,
        expected: usize,
    },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The worked two-resource, three-agent, two-state fixture whose
/// equilibrium costs at the four reference posteriors are 11, 12, 9.4 and
/// 19.2; those four values witness that the optimistic equilibrium cost is
/// neither convex nor concave in the posterior.
pub fn gen_table1(prior: Option<(Rational, Rational)>) -> Result<Instance<Rational>, GameError> {
    let (p1, p2) = prior.unwrap_or((Rational::ratio(1, 2), Rational::ratio(1, 2)));
    let row = |values: [i64; 3]| values.iter().map(|&v| Rational::from_int(v)).collect();
    Instance::new(
        "table1",
        3,
        vec!["r1".into(), "r2".into()],
        vec![vec![0, 1]; 3],
        vec![
            State {
                name: "theta1".into(),
                prior: p1,
                costs: vec![row([1, 1, 10]), row([9, 10, 10])],
            },
            State {
                name: "theta2".into(),
                prior: p2,
                costs: vec![row([1, 1, 4]), row([5, 5, 10])],
            },
        ],
    )
}

/// The introductory three-edge routing example: one risky edge per state
/// costs nothing until it is full (`c(N) = 1`), the other risky edge costs
/// `h` in that state, and a safe edge costs `1 + eps` regardless.
///
/// The off-state cost `h` is a reconstruction parameter; any `h >= 2` with
/// small `eps` preserves the story: full information herds everyone onto
/// the good edge at total cost `N`, while telling everyone but one agent
/// drops the total cost to `1 + eps`.
pub fn gen_figure1(
    num_agents: usize,
    eps: &Rational,
    h: &Rational,
) -> Result<Instance<Rational>, InstancesError> {
    if num_agents < 2 {
        return Err(InstancesError::InvalidParams(
            "the construction needs at least two agents".into(),
        ));
    }
    if !eps.is_positive() {
        return Err(InstancesError::InvalidParams("eps must be positive".into()));
    }
    if *h < Rational::from_int(2) {
        return Err(InstancesError::InvalidParams(
            "the off-state cost h must be at least 2".into(),
        ));
    }
    let threshold = vec![Rational::zero(); num_agents - 1]
        .into_iter()
        .chain([Rational::one()])
        .collect::<Vec<_>>();
    let flat_h = vec![h.clone(); num_agents];
    let safe = vec![Rational::one() + eps.clone(); num_agents];
    let half = Rational::ratio(1, 2);
    Ok(Instance::new(
        format!("figure1-n{num_agents}"),
        num_agents,
        vec!["risky_a".into(), "risky_b".into(), "safe".into()],
        vec![vec![0, 1, 2]; num_agents],
        vec![
            State {
                name: "theta1".into(),
                prior: half.clone(),
                costs: vec![threshold.clone(), flat_h.clone(), safe.clone()],
            },
            State {
                name: "theta2".into(),
                prior: half,
                costs: vec![flat_h, threshold, safe],
            },
        ],
    )?)
}

/// The reveal-to-all-but-one private scheme for a [`gen_figure1`] instance:
/// in each state the informed agents are pointed at that state's free edge
/// and the last agent is parked on the safe edge.
pub fn figure1_reveal_scheme<T: Scalar>(inst: &Instance<T>) -> ExplicitScheme<T> {
    let n = inst.num_agents();
    let profile_for = |good: usize| {
        let mut actions = vec![good; n];
        actions[n - 1] = 2;
        ActionProfile::new(actions)
    };
    ExplicitScheme {
        per_state: vec![
            vec![(profile_for(0), T::one())],
            vec![(profile_for(1), T::one())],
        ],
    }
}

/// An undirected graph with an optional partial coloring, used by the
/// graph-based instance family.
#[derive(Clone, Debug)]
pub struct GraphSpec {
    pub num_vertices: usize,
    /// Normalized to `u < v`, sorted, deduplicated.
    pub edges: Vec<(usize, usize)>,
    /// `coloring[v]` is the color class of vertex `v`, if any.
    pub coloring: Option<Vec<Option<usize>>>,
}

impl GraphSpec {
    pub fn new(
        num_vertices: usize,
        edges: Vec<(usize, usize)>,
        coloring: Option<Vec<Option<usize>>>,
    ) -> Result<Self, InstancesError> {
        if num_vertices == 0 {
            return Err(InstancesError::GraphInvariantViolated("empty graph".into()));
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return Err(InstancesError::GraphInvariantViolated(format!(
                    "self loop at vertex {u}"
                )));
            }
            if u >= num_vertices || v >= num_vertices {
                return Err(InstancesError::GraphInvariantViolated(format!(
                    "edge ({u}, {v}) outside of {num_vertices} vertices"
                )));
            }
            normalized.push((u.min(v), u.max(v)));
        }
        normalized.sort_unstable();
        let before = normalized.len();
        normalized.dedup();
        if normalized.len() != before {
            return Err(InstancesError::GraphInvariantViolated(
                "duplicate edges".into(),
            ));
        }
        let spec = Self {
            num_vertices,
            edges: normalized,
            coloring,
        };
        if let Some(coloring) = &spec.coloring {
            if coloring.len() != num_vertices {
                return Err(InstancesError::GraphInvariantViolated(
                    "coloring length differs from the vertex count".into(),
                ));
            }
            for &(u, v) in &spec.edges {
                if let (Some(cu), Some(cv)) = (coloring[u], coloring[v]) {
                    if cu == cv {
                        return Err(InstancesError::GraphInvariantViolated(format!(
                            "color class {cu} contains adjacent vertices {u} and {v}"
                        )));
                    }
                }
            }
        }
        Ok(spec)
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        let key = (u.min(v), u.max(v));
        self.edges.binary_search(&key).is_ok()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == v || b == v)
            .count()
    }
}

/// Builds the symmetric graph instance: one state per vertex under a
/// uniform prior, one resource per vertex plus a backup. In state `v` the
/// resource `v` costs `1 - 1/n^2` (the good resource), neighbors of `v`
/// cost a flat 3, everything else in the graph costs a flat 1, and the
/// backup always costs 1.
pub fn gen_hardness(
    graph: &GraphSpec,
    q: usize,
    k: usize,
    eps: &Rational,
) -> Result<Instance<Rational>, InstancesError> {
    if q == 0 {
        return Err(InstancesError::InvalidParams("q must be positive".into()));
    }
    if eps.is_negative() || *eps >= Rational::one() {
        return Err(InstancesError::InvalidParams(
            "eps must lie in [0, 1)".into(),
        ));
    }
    let r = graph.num_vertices;
    for v in 0..r {
        if graph.degree(v) == r - 1 {
            return Err(InstancesError::GraphInvariantViolated(format!(
                "vertex {v} is adjacent to all other vertices"
            )));
        }
    }
    let agents_rat =
        (Rational::one() - eps.clone()) * Rational::from_int(r as i64) / Rational::from_int(q as i64);
    if !agents_rat.is_integer() || !agents_rat.is_positive() {
        return Err(InstancesError::NonIntegerAgentCount(agents_rat.to_string()));
    }
    let num_agents = agents_rat
        .to_integer()
        .to_usize()
        .ok_or_else(|| InstancesError::InvalidParams("agent count out of range".into()))?;

    let good: Vec<Rational> = (1..=num_agents as i64)
        .map(|n| Rational::one() - Rational::ratio(1, n * n))
        .collect();
    let flat = |v: i64| vec![Rational::from_int(v); num_agents];

    let mut resources: Vec<String> = (1..=r).map(|v| format!("v{v}")).collect();
    resources.push("backup".into());
    let uniform = Rational::ratio(1, r as i64);
    let mut states = Vec::with_capacity(r);
    for theta in 0..r {
        let mut costs = Vec::with_capacity(r + 1);
        for resource in 0..r {
            if resource == theta {
                costs.push(good.clone());
            } else if graph.adjacent(resource, theta) {
                costs.push(flat(3));
            } else {
                costs.push(flat(1));
            }
        }
        costs.push(flat(1));
        states.push(State {
            name: format!("v{}", theta + 1),
            prior: uniform.clone(),
            costs,
        });
    }
    Ok(Instance::new(
        format!("hardness-r{r}-q{q}-k{k}"),
        num_agents,
        resources,
        vec![(0..=r).collect(); num_agents],
        states,
    )?)
}

/// The color-revealing public scheme: announce the color class of the
/// realized state. Each colored signal's posterior is uniform over an
/// independent set of exactly `N` vertices, so spreading one agent per
/// class resource is an equilibrium costing `N - 1`; the uncolored signal
/// (when present) recommends the optimistic equilibrium at its posterior.
pub fn coloring_scheme<T: Scalar>(
    inst: &Instance<T>,
    graph: &GraphSpec,
    coloring: &[Option<usize>],
) -> Result<PublicScheme<T>, InstancesError> {
    let r = graph.num_vertices;
    let n = inst.num_agents();
    if coloring.len() != r || inst.num_states() != r || inst.num_resources() != r + 1 {
        return Err(InstancesError::Schema(
            "instance/graph/coloring dimensions disagree".into(),
        ));
    }
    let mut classes: Vec<usize> = coloring.iter().flatten().copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let mut members: Vec<(usize, Vec<usize>)> = Vec::new();
    for &class in &classes {
        let vertices: Vec<usize> = (0..r).filter(|&v| coloring[v] == Some(class)).collect();
        for pair in 0..vertices.len() {
            for other in pair + 1..vertices.len() {
                if graph.adjacent(vertices[pair], vertices[other]) {
                    return Err(InstancesError::GraphInvariantViolated(format!(
                        "color class {class} is not independent"
                    )));
                }
            }
        }
        if vertices.len() != n {
            return Err(InstancesError::ClassSizeMismatch {
                class,
                size: vertices.len(),
                expected: n,
            });
        }
        members.push((class, vertices));
    }
    let uncolored: Vec<usize> = (0..r).filter(|&v| coloring[v].is_none()).collect();

    let prior = inst.prior();
    let mut signals = Vec::new();
    let mut push_signal = |states_in: &[usize],
                           config: Configuration,
                           assignment: ActionProfile|
     -> Result<(), InstancesError> {
        let probability: T = states_in.iter().map(|&v| prior.prob(v).clone()).sum();
        let emission: Vec<T> = (0..r)
            .map(|v| {
                if states_in.contains(&v) {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        let posterior = Posterior::new_unchecked(
            (0..r)
                .map(|v| {
                    if states_in.contains(&v) {
                        prior.prob(v).clone() / probability.clone()
                    } else {
                        T::zero()
                    }
                })
                .collect(),
        );
        let expected_cost: T = (0..r)
            .map(|v| posterior.prob(v).clone() * inst.state_social_cost(v, &config))
            .sum();
        signals.push(PublicSignal {
            emission,
            probability,
            posterior,
            config,
            assignment,
            expected_cost,
        });
        Ok(())
    };

    for (_, vertices) in &members {
        let mut counts = vec![0usize; r + 1];
        for &v in vertices {
            counts[v] = 1;
        }
        push_signal(
            vertices,
            Configuration::new(counts),
            ActionProfile::new(vertices.clone()),
        )?;
    }
    if !uncolored.is_empty() {
        let posterior = Posterior::new_unchecked(
            (0..r)
                .map(|v| {
                    if uncolored.contains(&v) {
                        T::ratio(1, uncolored.len() as i64)
                    } else {
                        T::zero()
                    }
                })
                .collect(),
        );
        let costs = inst.expected_costs(&posterior)?;
        let nash = best_nash(inst, &costs)?;
        push_signal(&uncolored, nash.config, nash.assignment)?;
    }
    Ok(PublicScheme { signals })
}

/// Reproducible random instance: integer costs sorted into monotone
/// tables, a rationalized Dirichlet-style prior, and (optionally) random
/// non-empty action sets.
pub fn gen_random(
    num_agents: usize,
    num_resources: usize,
    num_states: usize,
    seed: u64,
    asymmetric: bool,
) -> Result<Instance<Rational>, InstancesError> {
    if num_agents == 0 || num_resources == 0 || num_states == 0 {
        return Err(InstancesError::InvalidParams(
            "agents, resources and states must all be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let action_sets: Vec<Vec<usize>> = (0..num_agents)
        .map(|_| {
            if asymmetric {
                let mut set: Vec<usize> =
                    (0..num_resources).filter(|_| rng.gen_bool(0.5)).collect();
                if set.is_empty() {
                    set.push(rng.gen_range(0..num_resources));
                }
                set
            } else {
                (0..num_resources).collect()
            }
        })
        .collect();

    let weights: Vec<i64> = (0..num_states)
        .map(|_| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            ((-u.ln() * 1e6).round() as i64).max(1)
        })
        .collect();
    let total: i64 = weights.iter().sum();

    let states = (0..num_states)
        .map(|s| {
            let costs = (0..num_resources)
                .map(|_| {
                    let mut column: Vec<i64> =
                        (0..num_agents).map(|_| rng.gen_range(0..=12)).collect();
                    column.sort_unstable();
                    column.into_iter().map(Rational::from_int).collect()
                })
                .collect();
            State {
                name: format!("s{}", s + 1),
                prior: Rational::ratio(weights[s], total),
                costs,
            }
        })
        .collect();

    let suffix = if asymmetric { "-asym" } else { "" };
    Ok(Instance::new(
        format!("random-n{num_agents}-r{num_resources}-s{num_states}-seed{seed}{suffix}"),
        num_agents,
        (1..=num_resources).map(|r| format!("r{r}")).collect(),
        action_sets,
        states,
    )?)
}

/// A 4-cycle with the 2-coloring `{1,3} / {2,4}`; the canonical small
/// input for [`gen_hardness`] and [`coloring_scheme`].
pub fn c4_graph() -> GraphSpec {
    GraphSpec::new(
        4,
        vec![(0, 1), (1, 2), (2, 3), (3, 0)],
        Some(vec![Some(0), Some(1), Some(0), Some(1)]),
    )
    .expect("the 4-cycle is a valid graph")
}
