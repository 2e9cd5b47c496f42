//! Integer max-flow and decomposition of bipartite fractional flows into
//! distributions over integer assignments.
//!
//! The decomposition is the workhorse of the private-signaling sampler: a
//! feasible reduced form gives, per configuration, a fractional bipartite
//! flow (agents supply one unit each, resource `r` demands `n_r` units),
//! and repeatedly extracting integer max-flows writes that fractional flow
//! as a convex combination of deterministic assignments. Each round zeroes
//! out at least one edge, so the procedure stops within
//! `N*R + N + R` rounds.

use crate::scalar::Scalar;

use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    /// The marginals do not form a consistent fractional flow; an
    /// intermediate integer max-flow fell short of the agent count.
    #[error("infeasible marginals: {0}")]
    InfeasibleMarginals(String),
}

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: i64,
    rev: usize,
}

/// Dinic max-flow with deterministic edge ordering.
#[derive(Clone, Debug)]
pub struct MaxFlowGraph {
    adj: Vec<Vec<Arc>>,
}

impl MaxFlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
        }
    }

    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) {
        debug_assert!(cap >= 0);
        let rev_from = self.adj[to].len();
        let rev_to = self.adj[from].len();
        self.adj[from].push(Arc {
            to,
            cap,
            rev: rev_from,
        });
        self.adj[to].push(Arc {
            to: from,
            cap: 0,
            rev: rev_to,
        });
    }

    fn bfs_levels(&self, source: usize, sink: usize) -> Option<Vec<i32>> {
        let mut level = vec![-1; self.adj.len()];
        let mut queue = VecDeque::new();
        level[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for arc in &self.adj[u] {
                if arc.cap > 0 && level[arc.to] < 0 {
                    level[arc.to] = level[u] + 1;
                    queue.push_back(arc.to);
                }
            }
        }
        (level[sink] >= 0).then_some(level)
    }

    fn dfs_push(
        &mut self,
        u: usize,
        sink: usize,
        pushed: i64,
        level: &[i32],
        iter: &mut [usize],
    ) -> i64 {
        if u == sink {
            return pushed;
        }
        while iter[u] < self.adj[u].len() {
            let (to, cap) = {
                let arc = &self.adj[u][iter[u]];
                (arc.to, arc.cap)
            };
            if cap > 0 && level[to] == level[u] + 1 {
                let flow = self.dfs_push(to, sink, pushed.min(cap), level, iter);
                if flow > 0 {
                    let rev = self.adj[u][iter[u]].rev;
                    self.adj[u][iter[u]].cap -= flow;
                    self.adj[to][rev].cap += flow;
                    return flow;
                }
            }
            iter[u] += 1;
        }
        0
    }

    /// Maximum `source`-`sink` flow; integral for integral capacities.
    pub fn max_flow(&mut self, source: usize, sink: usize) -> i64 {
        let mut total = 0;
        while let Some(level) = self.bfs_levels(source, sink) {
            let mut iter = vec![0usize; self.adj.len()];
            loop {
                let pushed = self.dfs_push(source, sink, i64::MAX, &level, &mut iter);
                if pushed == 0 {
                    break;
                }
                total += pushed;
            }
        }
        total
    }
}

/// Matches every agent to a resource along the given adjacency so that
/// resource `r` receives exactly `demand[r]` agents. Unit supplies, fixed
/// demands; `None` when the max-flow is short of the agent count.
pub fn feasible_assignment(adjacency: &[Vec<usize>], demand: &[usize]) -> Option<Vec<usize>> {
    let n_agents = adjacency.len();
    let n_resources = demand.len();
    if demand.iter().sum::<usize>() != n_agents {
        return None;
    }
    let source = n_agents + n_resources;
    let sink = source + 1;
    let mut graph = MaxFlowGraph::new(sink + 1);
    for i in 0..n_agents {
        graph.add_edge(source, i, 1);
    }
    // Remember where each agent->resource arc lives to read the matching back.
    let mut arc_pos: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_agents];
    for (i, allowed) in adjacency.iter().enumerate() {
        for &r in allowed {
            debug_assert!(r < n_resources);
            arc_pos[i].push((r, graph.adj[i].len()));
            graph.add_edge(i, n_agents + r, 1);
        }
    }
    for (r, &d) in demand.iter().enumerate() {
        graph.add_edge(n_agents + r, sink, d as i64);
    }
    if graph.max_flow(source, sink) != n_agents as i64 {
        return None;
    }
    let mut assignment = vec![usize::MAX; n_agents];
    for (i, arcs) in arc_pos.iter().enumerate() {
        for &(r, pos) in arcs {
            if graph.adj[i][pos].cap == 0 {
                assignment[i] = r;
                break;
            }
        }
    }
    debug_assert!(assignment.iter().all(|&r| r != usize::MAX));
    Some(assignment)
}

/// A fractional one-to-many bipartite flow: agent `i` sends `flow[i][r]`
/// to resource `r`, rows sum to one, column `r` sums to `demand[r]`.
#[derive(Clone, Debug)]
pub struct BipartiteFlowProblem<T> {
    pub demand: Vec<usize>,
    /// `flow[agent][resource]`, zero outside the availability graph.
    pub flow: Vec<Vec<T>>,
}

impl<T: Scalar> BipartiteFlowProblem<T> {
    pub fn num_agents(&self) -> usize {
        self.flow.len()
    }

    pub fn num_resources(&self) -> usize {
        self.demand.len()
    }

    /// Checks supply/demand consistency within `tol` (exact when `tol` is zero).
    pub fn check(&self, tol: &T) -> Result<(), FlowError> {
        for (i, row) in self.flow.iter().enumerate() {
            if row.len() != self.demand.len() {
                return Err(FlowError::InfeasibleMarginals(format!(
                    "agent {i}: row length {} != {} resources",
                    row.len(),
                    self.demand.len()
                )));
            }
            if row.iter().any(|v| *v < -tol.clone()) {
                return Err(FlowError::InfeasibleMarginals(format!(
                    "agent {i}: negative flow entry"
                )));
            }
            let sum: T = row.iter().cloned().sum();
            if (sum - T::one()).abs() > *tol {
                return Err(FlowError::InfeasibleMarginals(format!(
                    "agent {i}: outgoing flow does not sum to 1"
                )));
            }
        }
        for r in 0..self.demand.len() {
            let col: T = self.flow.iter().map(|row| row[r].clone()).sum();
            if (col - T::from_int(self.demand[r] as i64)).abs() > *tol {
                return Err(FlowError::InfeasibleMarginals(format!(
                    "resource {r}: incoming flow does not match demand {}",
                    self.demand[r]
                )));
            }
        }
        Ok(())
    }
}

/// A convex combination of integer assignments reproducing a fractional flow.
#[derive(Clone, Debug)]
pub struct FlowDecomposition<T> {
    /// `(assignment, weight)`; weights are positive and sum to one.
    pub parts: Vec<(Vec<usize>, T)>,
    pub rounds: usize,
}

/// The certified round bound for decomposing an `n_agents * n_resources`
/// bipartite flow: one edge is eliminated per round.
pub fn round_bound(n_agents: usize, n_resources: usize) -> usize {
    n_agents * n_resources + n_agents + n_resources
}

/// Writes a fractional bipartite flow as a distribution over integer
/// assignments. Each round runs an integer max-flow on the positive-flow
/// subgraph, peels off the extracted assignment with the largest weight
/// that keeps the residual non-negative, and zeroes at least one edge.
pub fn decompose_fractional_flow<T: Scalar>(
    prob: &BipartiteFlowProblem<T>,
) -> Result<FlowDecomposition<T>, FlowError> {
    let check_tol = if T::EXACT {
        T::zero()
    } else {
        T::ratio(1, 1_000_000)
    };
    prob.check(&check_tol)?;

    let n_agents = prob.num_agents();
    let n_resources = prob.num_resources();
    let drop_tol = T::drop_tol();
    // Residual mass below this terminates float-mode decomposition; the
    // exact mode runs the residual down to literal zero.
    let stop_tol = if T::EXACT {
        T::zero()
    } else {
        T::ratio(1, 1_000_000_000)
    };

    let mut residual: Vec<Vec<T>> = prob.flow.clone();
    for row in &mut residual {
        for v in row.iter_mut() {
            if !T::EXACT && v.abs() <= drop_tol {
                *v = T::zero();
            }
        }
    }
    let mut remaining = T::one();
    let mut parts: Vec<(Vec<usize>, T)> = Vec::new();
    let bound = round_bound(n_agents, n_resources);

    let mut rounds = 0;
    while remaining > stop_tol {
        if rounds >= bound {
            return Err(FlowError::InfeasibleMarginals(format!(
                "decomposition exceeded {bound} rounds"
            )));
        }
        rounds += 1;

        let support: Vec<Vec<usize>> = residual
            .iter()
            .map(|row| {
                (0..n_resources)
                    .filter(|&r| row[r] > T::zero())
                    .collect::<Vec<_>>()
            })
            .collect();
        let assignment = feasible_assignment(&support, &prob.demand).ok_or_else(|| {
            FlowError::InfeasibleMarginals(format!(
                "integer max-flow short of {n_agents} on the positive-flow subgraph"
            ))
        })?;

        let mut weight = remaining.clone();
        for (i, &r) in assignment.iter().enumerate() {
            if residual[i][r] < weight {
                weight = residual[i][r].clone();
            }
        }
        if weight <= T::zero() {
            return Err(FlowError::InfeasibleMarginals(
                "stalled with a zero-weight round".into(),
            ));
        }
        for (i, &r) in assignment.iter().enumerate() {
            residual[i][r] -= weight.clone();
            if !T::EXACT && residual[i][r].abs() <= drop_tol {
                residual[i][r] = T::zero();
            }
        }
        remaining -= weight.clone();
        if !T::EXACT && remaining.abs() <= drop_tol {
            remaining = T::zero();
        }
        parts.push((assignment, weight));
    }

    // Whatever mass the stop tolerance left behind is redistributed so the
    // weights form an exact distribution.
    let total: T = parts.iter().map(|(_, w)| w.clone()).sum();
    if total != T::one() {
        for (_, w) in &mut parts {
            *w = w.clone() / total.clone();
        }
    }
    Ok(FlowDecomposition { parts, rounds })
}
