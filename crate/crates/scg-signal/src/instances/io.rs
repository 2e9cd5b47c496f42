//! Self-describing instance and scheme documents.
//!
//! All numeric values travel as strings and parse to exact rationals:
//! integers (`"3"`), decimals (`"0.125"`), or explicit fractions
//! (`"1/3"`). The writer picks the shortest exact form, so a
//! read-write-read round trip is byte-identical after the first
//! canonicalization.

use super::InstancesError;
use crate::game::{ActionProfile, Configuration, Instance, Posterior, State};
use crate::private::{check_reduced_feasibility, ExplicitScheme, ReducedForm};
use crate::public::{PublicScheme, PublicSignal};
use crate::scalar::Scalar;
use crate::Rational;
use indexmap::IndexMap;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn parse_rational(text: &str) -> Result<Rational, InstancesError> {
    let s = text.trim();
    let bad = || InstancesError::Parse(format!("cannot parse {text:?} as a rational"));
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(InstancesError::Parse(format!("zero denominator in {text:?}")));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let whole_digits = whole.trim_start_matches(['-', '+']);
        if !whole_digits.chars().all(|c| c.is_ascii_digit())
            || frac.is_empty()
            || !frac.chars().all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let mut digits = String::with_capacity(whole_digits.len() + frac.len());
        digits.push_str(whole_digits);
        digits.push_str(frac);
        let numer: BigInt = digits.parse().map_err(|_| bad())?;
        let denom = BigInt::from(10u32).pow(frac.len() as u32);
        let value = Rational::new(numer, denom);
        return Ok(if negative { -value } else { value });
    }
    let int: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(int))
}

/// Shortest exact rendering: integer, terminating decimal, or `p/q`.
pub fn format_rational(value: &Rational) -> String {
    let numer = value.numer();
    let denom = value.denom();
    if denom.is_one() {
        return numer.to_string();
    }
    let mut rest = denom.clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    let two = BigInt::from(2u32);
    let five = BigInt::from(5u32);
    while (&rest % &two).is_zero() {
        rest /= &two;
        twos += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        fives += 1;
    }
    if !rest.is_one() {
        return format!("{numer}/{denom}");
    }
    let scale = twos.max(fives);
    let digits = (numer.abs() * BigInt::from(10u32).pow(scale) / denom).to_string();
    let digits = if digits.len() <= scale as usize {
        format!("{}{}", "0".repeat(scale as usize + 1 - digits.len()), digits)
    } else {
        digits
    };
    let (whole, frac) = digits.split_at(digits.len() - scale as usize);
    let sign = if value.is_negative() { "-" } else { "" };
    format!("{sign}{whole}.{frac}")
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    name: String,
    prior: String,
    costs: IndexMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    name: String,
    num_agents: usize,
    resources: Vec<String>,
    action_sets: Vec<Vec<usize>>,
    states: Vec<StateDoc>,
}

pub fn instance_to_string(inst: &Instance<Rational>) -> String {
    let doc = InstanceDoc {
        name: inst.name().to_string(),
        num_agents: inst.num_agents(),
        resources: inst.resources().to_vec(),
        action_sets: inst.action_sets().to_vec(),
        states: inst
            .states()
            .iter()
            .map(|s| StateDoc {
                name: s.name.clone(),
                prior: format_rational(&s.prior),
                costs: inst
                    .resources()
                    .iter()
                    .enumerate()
                    .map(|(r, res)| {
                        (res.clone(), s.costs[r].iter().map(format_rational).collect())
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("instance serialization");
    out.push('\n');
    out
}

pub fn instance_from_str(text: &str) -> Result<Instance<Rational>, InstancesError> {
    let doc: InstanceDoc =
        serde_json::from_str(text).map_err(|e| InstancesError::Parse(e.to_string()))?;
    let mut states = Vec::with_capacity(doc.states.len());
    for (si, state) in doc.states.iter().enumerate() {
        let prior = parse_rational(&state.prior)
            .map_err(|_| InstancesError::Schema(format!("states[{si}].prior")))?;
        let mut costs = Vec::with_capacity(doc.resources.len());
        for resource in &doc.resources {
            let row = state.costs.get(resource).ok_or_else(|| {
                InstancesError::Schema(format!("states[{si}].costs missing resource {resource:?}"))
            })?;
            if row.len() != doc.num_agents {
                return Err(InstancesError::Schema(format!(
                    "states[{si}].costs[{resource:?}] has {} entries, expected {}",
                    row.len(),
                    doc.num_agents
                )));
            }
            let mut parsed = Vec::with_capacity(row.len());
            for (ni, cell) in row.iter().enumerate() {
                parsed.push(parse_rational(cell).map_err(|_| {
                    InstancesError::Schema(format!("states[{si}].costs[{resource:?}][{ni}]"))
                })?);
            }
            costs.push(parsed);
        }
        if state.costs.len() != doc.resources.len() {
            return Err(InstancesError::Schema(format!(
                "states[{si}].costs names {} resources, expected {}",
                state.costs.len(),
                doc.resources.len()
            )));
        }
        states.push(State {
            name: state.name.clone(),
            prior,
            costs,
        });
    }
    Instance::new(
        doc.name,
        doc.num_agents,
        doc.resources,
        doc.action_sets,
        states,
    )
    .map_err(InstancesError::Game)
}

pub fn write_instance(path: &Path, inst: &Instance<Rational>) -> Result<(), InstancesError> {
    std::fs::write(path, instance_to_string(inst))?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<Instance<Rational>, InstancesError> {
    instance_from_str(&std::fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
struct SignalDoc {
    emission: IndexMap<String, String>,
    posterior: IndexMap<String, String>,
    probability: String,
    recommended_config: Vec<usize>,
    recommended_assignment: Vec<usize>,
    expected_cost: String,
}

#[derive(Serialize, Deserialize)]
struct ExplicitEntryDoc {
    state: String,
    profile: Vec<usize>,
    prob: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum SchemeDoc {
    Public {
        signals: Vec<SignalDoc>,
    },
    Private {
        reduced_form: Vec<(String, Vec<usize>, usize, usize, String)>,
        #[serde(skip_serializing_if = "Option::is_none")]
        explicit: Option<Vec<ExplicitEntryDoc>>,
    },
}

/// A parsed scheme document, already checked for consistency against the
/// instance it was read with.
pub enum SchemeFile {
    Public(PublicScheme<Rational>),
    Private {
        reduced: ReducedForm<Rational>,
        explicit: Option<ExplicitScheme<Rational>>,
    },
}

pub fn public_scheme_to_string(
    inst: &Instance<Rational>,
    scheme: &PublicScheme<Rational>,
) -> String {
    let names: Vec<&str> = inst.states().iter().map(|s| s.name.as_str()).collect();
    let doc = SchemeDoc::Public {
        signals: scheme
            .signals
            .iter()
            .map(|signal| SignalDoc {
                emission: names
                    .iter()
                    .enumerate()
                    .map(|(th, name)| (name.to_string(), format_rational(&signal.emission[th])))
                    .collect(),
                posterior: names
                    .iter()
                    .enumerate()
                    .map(|(th, name)| {
                        (name.to_string(), format_rational(signal.posterior.prob(th)))
                    })
                    .collect(),
                probability: format_rational(&signal.probability),
                recommended_config: signal.config.counts().to_vec(),
                recommended_assignment: signal.assignment.actions().to_vec(),
                expected_cost: format_rational(&signal.expected_cost),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("scheme serialization");
    out.push('\n');
    out
}

pub fn private_scheme_to_string(
    inst: &Instance<Rational>,
    reduced: &ReducedForm<Rational>,
    explicit: Option<&ExplicitScheme<Rational>>,
) -> String {
    let names: Vec<&str> = inst.states().iter().map(|s| s.name.as_str()).collect();
    let doc = SchemeDoc::Private {
        reduced_form: reduced
            .iter_nonzero()
            .map(|(state, cidx, agent, resource, v)| {
                (
                    names[state].to_string(),
                    reduced.configs()[cidx].counts().to_vec(),
                    agent,
                    resource,
                    format_rational(v),
                )
            })
            .collect(),
        explicit: explicit.map(|scheme| {
            scheme
                .per_state
                .iter()
                .enumerate()
                .flat_map(|(state, entries)| {
                    entries.iter().map(move |(profile, prob)| (state, profile, prob))
                })
                .map(|(state, profile, prob)| ExplicitEntryDoc {
                    state: names[state].to_string(),
                    profile: profile.actions().to_vec(),
                    prob: format_rational(prob),
                })
                .collect()
        }),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("scheme serialization");
    out.push('\n');
    out
}

fn state_index(inst: &Instance<Rational>, name: &str) -> Result<usize, InstancesError> {
    inst.states()
        .iter()
        .position(|s| s.name == name)
        .ok_or_else(|| InstancesError::Schema(format!("unknown state {name:?}")))
}

/// Tolerance for consistency checks on load; schemes written from float
/// solves are only float-accurate.
fn load_tol() -> Rational {
    Rational::ratio(1, 1_000_000_000)
}

pub fn scheme_from_str(
    inst: &Instance<Rational>,
    text: &str,
) -> Result<SchemeFile, InstancesError> {
    let doc: SchemeDoc =
        serde_json::from_str(text).map_err(|e| InstancesError::Parse(e.to_string()))?;
    match doc {
        SchemeDoc::Public { signals } => {
            let mut out = Vec::with_capacity(signals.len());
            for (k, signal) in signals.iter().enumerate() {
                let mut emission = vec![Rational::zero(); inst.num_states()];
                for (name, value) in &signal.emission {
                    emission[state_index(inst, name)?] = parse_rational(value)
                        .map_err(|_| InstancesError::Schema(format!("signals[{k}].emission")))?;
                }
                let mut posterior = vec![Rational::zero(); inst.num_states()];
                for (name, value) in &signal.posterior {
                    posterior[state_index(inst, name)?] = parse_rational(value)
                        .map_err(|_| InstancesError::Schema(format!("signals[{k}].posterior")))?;
                }
                out.push(PublicSignal {
                    emission,
                    probability: parse_rational(&signal.probability).map_err(|_| {
                        InstancesError::Schema(format!("signals[{k}].probability"))
                    })?,
                    posterior: Posterior::new_unchecked(posterior),
                    config: Configuration::new(signal.recommended_config.clone()),
                    assignment: ActionProfile::new(signal.recommended_assignment.clone()),
                    expected_cost: parse_rational(&signal.expected_cost).map_err(|_| {
                        InstancesError::Schema(format!("signals[{k}].expected_cost"))
                    })?,
                });
            }
            let scheme = PublicScheme { signals: out };
            crate::public::validate_scheme(inst, &scheme, &load_tol())
                .map_err(|e| InstancesError::Schema(e.to_string()))?;
            Ok(SchemeFile::Public(scheme))
        }
        SchemeDoc::Private {
            reduced_form,
            explicit,
        } => {
            let configs = inst.enumerate_configurations()?;
            let mut reduced = ReducedForm::new(
                inst.num_agents(),
                inst.num_resources(),
                inst.num_states(),
                configs,
            );
            for (i, (state, config, agent, resource, value)) in reduced_form.iter().enumerate() {
                let state = state_index(inst, state)?;
                let config = Configuration::new(config.clone());
                let cidx = reduced.config_index(&config).ok_or_else(|| {
                    InstancesError::Schema(format!(
                        "reduced_form[{i}]: {:?} is not a feasible configuration",
                        config.counts()
                    ))
                })?;
                if *agent >= inst.num_agents() || *resource >= inst.num_resources() {
                    return Err(InstancesError::Schema(format!(
                        "reduced_form[{i}]: agent/resource out of range"
                    )));
                }
                let value = parse_rational(value)
                    .map_err(|_| InstancesError::Schema(format!("reduced_form[{i}].value")))?;
                reduced.set(state, cidx, *agent, *resource, value);
            }
            let report = check_reduced_feasibility(inst, &reduced, &load_tol());
            if let Some(first) = report.first() {
                return Err(InstancesError::Schema(format!(
                    "reduced form fails feasibility: {first}"
                )));
            }
            let explicit = match explicit {
                None => None,
                Some(entries) => {
                    let mut per_state: Vec<Vec<(ActionProfile, Rational)>> =
                        vec![Vec::new(); inst.num_states()];
                    for (i, entry) in entries.iter().enumerate() {
                        let state = state_index(inst, &entry.state)?;
                        let profile = ActionProfile::new(entry.profile.clone());
                        inst.config_of_profile(&profile).map_err(|e| {
                            InstancesError::Schema(format!("explicit[{i}]: {e}"))
                        })?;
                        let prob = parse_rational(&entry.prob)
                            .map_err(|_| InstancesError::Schema(format!("explicit[{i}].prob")))?;
                        per_state[state].push((profile, prob));
                    }
                    for (state, entries) in per_state.iter().enumerate() {
                        let total: Rational =
                            entries.iter().map(|(_, p)| p.clone()).sum();
                        if Signed::abs(&(total.clone() - Rational::one())) > load_tol() {
                            return Err(InstancesError::Schema(format!(
                                "explicit distribution for state {state} sums to {total}"
                            )));
                        }
                    }
                    Some(ExplicitScheme { per_state })
                }
            };
            Ok(SchemeFile::Private { reduced, explicit })
        }
    }
}

pub fn read_scheme(path: &Path, inst: &Instance<Rational>) -> Result<SchemeFile, InstancesError> {
    scheme_from_str(inst, &std::fs::read_to_string(path)?)
}

/// Edge-list graph format: `#` comments, first data line is the vertex
/// count, then `u v` edge lines (1-based) and optional `c v k` coloring
/// lines assigning vertex `v` to color class `k` (1-based).
pub fn read_edge_list(path: &Path) -> Result<super::GraphSpec, InstancesError> {
    let text = std::fs::read_to_string(path)?;
    let mut vertices: Option<usize> = None;
    let mut edges = Vec::new();
    let mut colors: Vec<(usize, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| {
            InstancesError::Parse(format!("line {}: {what}: {raw:?}", lineno + 1))
        };
        match vertices {
            None => {
                if fields.len() != 1 {
                    return Err(bad("expected the vertex count"));
                }
                vertices = Some(fields[0].parse().map_err(|_| bad("bad vertex count"))?);
            }
            Some(n) => {
                if fields[0] == "c" {
                    if fields.len() != 3 {
                        return Err(bad("expected \"c vertex class\""));
                    }
                    let v: usize = fields[1].parse().map_err(|_| bad("bad vertex"))?;
                    let k: usize = fields[2].parse().map_err(|_| bad("bad class"))?;
                    if v == 0 || v > n || k == 0 {
                        return Err(bad("vertex/class out of range"));
                    }
                    colors.push((v - 1, k - 1));
                } else {
                    if fields.len() != 2 {
                        return Err(bad("expected \"u v\""));
                    }
                    let u: usize = fields[0].parse().map_err(|_| bad("bad endpoint"))?;
                    let v: usize = fields[1].parse().map_err(|_| bad("bad endpoint"))?;
                    if u == 0 || v == 0 || u > n || v > n {
                        return Err(bad("endpoint out of range"));
                    }
                    edges.push((u - 1, v - 1));
                }
            }
        }
    }
    let n = vertices.ok_or_else(|| InstancesError::Parse("empty graph file".into()))?;
    let coloring = if colors.is_empty() {
        None
    } else {
        let mut assignment = vec![None; n];
        for (v, k) in colors {
            assignment[v] = Some(k);
        }
        Some(assignment)
    };
    super::GraphSpec::new(n, edges, coloring)
}

pub fn write_scheme_string(path: &Path, text: &str) -> Result<(), InstancesError> {
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{gen_random, gen_table1};
    use crate::private::solve_optimal_private;
    use crate::public::solve_optimal_public;

    #[test]
    fn rational_parsing_accepts_all_forms() {
        assert_eq!(parse_rational("3").unwrap(), Rational::from_int(3));
        assert_eq!(parse_rational("-2").unwrap(), Rational::from_int(-2));
        assert_eq!(parse_rational("0.6").unwrap(), Rational::ratio(3, 5));
        assert_eq!(parse_rational("1.25").unwrap(), Rational::ratio(5, 4));
        assert_eq!(parse_rational("2/6").unwrap(), Rational::ratio(1, 3));
        assert_eq!(parse_rational(" 7/2 ").unwrap(), Rational::ratio(7, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1.").is_err());
    }

    #[test]
    fn rational_formatting_is_shortest_exact() {
        assert_eq!(format_rational(&Rational::from_int(7)), "7");
        assert_eq!(format_rational(&Rational::ratio(3, 5)), "0.6");
        assert_eq!(format_rational(&Rational::ratio(1, 8)), "0.125");
        assert_eq!(format_rational(&Rational::ratio(1, 3)), "1/3");
        assert_eq!(format_rational(&Rational::ratio(-47, 5)), "-9.4");
        assert_eq!(format_rational(&Rational::ratio(101, 100)), "1.01");
    }

    #[test]
    fn formatting_round_trips() {
        for (num, den) in [(1i64, 3i64), (7, 10), (22, 7), (5, 1), (-9, 4), (0, 1)] {
            let r = Rational::ratio(num, den);
            assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
        }
    }

    #[test]
    fn instance_round_trip_is_canonical() {
        let inst = gen_table1(None).unwrap();
        let text = instance_to_string(&inst);
        let back = instance_from_str(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(instance_to_string(&back), text);

        let random = gen_random(4, 3, 2, 3, true).unwrap();
        let text = instance_to_string(&random);
        assert_eq!(instance_from_str(&text).unwrap(), random);
    }

    #[test]
    fn malformed_prior_names_the_field() {
        let inst = gen_table1(None).unwrap();
        let text = instance_to_string(&inst).replace("\"prior\": \"0.5\"", "\"prior\": \"x.5\"");
        let err = instance_from_str(&text).unwrap_err();
        match err {
            InstancesError::Schema(msg) => assert!(msg.contains("states[0].prior"), "{msg}"),
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn public_scheme_round_trips() {
        let inst = gen_table1(None).unwrap();
        let (scheme, _) = solve_optimal_public(&inst, &Default::default()).unwrap();
        let text = public_scheme_to_string(&inst, &scheme);
        match scheme_from_str(&inst, &text).unwrap() {
            SchemeFile::Public(back) => {
                assert_eq!(public_scheme_to_string(&inst, &back), text);
            }
            _ => panic!("expected a public scheme"),
        }
    }

    #[test]
    fn private_scheme_round_trips() {
        let inst = gen_table1(None).unwrap();
        let (reduced, _) = solve_optimal_private(&inst, &Default::default()).unwrap();
        let explicit = crate::private::explicit_from_reduced(&inst, &reduced).unwrap();
        let text = private_scheme_to_string(&inst, &reduced, Some(&explicit));
        match scheme_from_str(&inst, &text).unwrap() {
            SchemeFile::Private {
                reduced: back,
                explicit: back_explicit,
            } => {
                assert_eq!(back, reduced);
                assert_eq!(back_explicit.unwrap(), explicit);
            }
            _ => panic!("expected a private scheme"),
        }
    }
}
