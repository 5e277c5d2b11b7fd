//! Network-of-automata simulator producing discrete runs.
//!
//! A model is a set of automata over shared integer variables and broadcast
//! channels. Each automaton has one local clock, reset on every edge it
//! takes. A location may carry an invariant (an upper bound on the local
//! clock) or an exponential delay rate; edges carry a lower-bound clock
//! guard, equality guards on variables, an optional broadcast emit or
//! receive, a weight, and variable updates.
//!
//! Time is continuous. In a location with at least one non-receive edge the
//! automaton commits to a fire time: uniform over the window the invariant
//! and the smallest guard leave open, or guard-wait plus an exponential
//! delay when the location is unbounded. Commitments race; the earliest
//! fires, ties resolved by automaton index. Emission is non-blocking: every
//! other automaton with an eligible receive edge on the channel takes it at
//! the same instant, in index order, after the emitter's updates. An
//! invariant that expires with no eligible edge stops the run early and
//! marks it as deadlocked.
//!
//! Observable events come from an [`EventMap`]: emitting a channel ticks the
//! clock mapped to it, and taking a labelled edge ticks every clock mapped
//! to the label. An event at time `t` becomes a tick at step `floor(t)`;
//! a time bound `B` therefore yields steps `0..=B-1`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{ClockId, Run};

/// Firings at one instant tolerated before the run is declared livelocked.
const SAME_INSTANT_CAP: u32 = 100_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("livelock: {count} firings at time {time} without progress")]
    Livelock { time: f64, count: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaModel {
    pub automata: Vec<Automaton>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<VarDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    #[serde(default)]
    pub init: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Automaton {
    pub name: String,
    pub initial: String,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    /// Upper bound on the local clock while here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<f64>,
    /// Exponential delay rate for unbounded locations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    /// Broadcast channel this edge emits on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emit: Option<String>,
    /// Broadcast channel this edge receives on; receive edges never fire on
    /// their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recv: Option<String>,
    /// Key into the event map's edge rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Lower bound on the local clock.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub guard: f64,
    /// Equality guards on variables; all must hold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when: Vec<VarGuard>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub updates: Vec<Update>,
}

fn one() -> f64 {
    1.0
}

fn is_one(w: &f64) -> bool {
    *w == 1.0
}

fn is_zero(g: &f64) -> bool {
    *g == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarGuard {
    pub var: String,
    pub is: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Update {
    Const { set: String, value: i64 },
    Copy { set: String, from: String },
}

/// Maps model events to observable clocks. Several rules may feed one
/// clock; its ticks are the union.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventMap {
    /// Channel name to the clock ticked whenever it is emitted.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub channels: BTreeMap<String, String>,
    /// Edge label to the clocks ticked whenever such an edge is taken.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub edges: BTreeMap<String, Vec<String>>,
}

impl EventMap {
    /// All observable clocks, sorted and deduplicated.
    pub fn clocks(&self) -> Vec<ClockId> {
        let mut names: BTreeSet<&str> = BTreeSet::new();
        names.extend(self.channels.values().map(String::as_str));
        names.extend(self.edges.values().flatten().map(String::as_str));
        names.into_iter().map(ClockId::new).collect()
    }
}

/// On-disk pairing of a model with its event map; the format model files
/// use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: StaModel,
    pub events: EventMap,
}

/// One simulated run; `deadlocked_at` is set when an invariant expired with
/// no way out and the run was truncated there.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub run: Run,
    pub deadlocked_at: Option<f64>,
}

/// A validated model plus event map, ready to generate runs by index.
///
/// Run `i` of a simulator seeded with `s` is a pure function of `(s, i)`:
/// every run gets its own counter-mode stream of the master generator, so
/// batches can be produced in parallel and in any order.
pub struct Simulator<'m> {
    model: &'m StaModel,
    map: &'m EventMap,
    bound: u32,
    seed: u64,
    clocks: Vec<ClockId>,
    autos: Vec<CompiledAutomaton>,
    var_init: Vec<i64>,
}

struct CompiledAutomaton {
    initial: usize,
    /// Outgoing edge indices per location.
    out: Vec<Vec<usize>>,
    edges: Vec<CompiledEdge>,
    invariant: Vec<Option<f64>>,
    rate: Vec<Option<f64>>,
}

struct CompiledEdge {
    to: usize,
    emit: Option<String>,
    recv: Option<String>,
    guard: f64,
    when: Vec<(usize, i64)>,
    weight: f64,
    updates: Vec<(usize, Source)>,
    /// Clocks ticked when this edge is taken (label rules, plus the channel
    /// rule when the edge emits).
    ticks: Vec<usize>,
}

enum Source {
    Const(i64),
    Var(usize),
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Commitment {
    /// Only receive edges (or nothing) available; waits for emissions.
    Passive,
    Fire(f64),
    /// Invariant expiry with nothing eligible.
    Dead(f64),
}

impl<'m> Simulator<'m> {
    pub fn new(
        model: &'m StaModel,
        map: &'m EventMap,
        bound: u32,
        seed: u64,
    ) -> Result<Simulator<'m>, SimError> {
        if bound == 0 {
            return Err(SimError::InvalidModel("time bound must be at least 1".into()));
        }
        validate_model(model)?;
        for msg in validate_event_map(model, map) {
            return Err(SimError::InvalidModel(msg));
        }
        let clocks = map.clocks();
        let clock_index: HashMap<&str, usize> = clocks
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let var_init: Vec<i64> = model.variables.iter().map(|v| v.init).collect();
        let var_index: HashMap<&str, usize> = model
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect();

        let autos = model
            .automata
            .iter()
            .map(|a| compile_automaton(a, map, &clock_index, &var_index))
            .collect();

        Ok(Simulator {
            model,
            map,
            bound,
            seed,
            clocks,
            autos,
            var_init,
        })
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    pub fn model(&self) -> &StaModel {
        self.model
    }

    pub fn event_map(&self) -> &EventMap {
        self.map
    }

    /// The observable clocks every produced run contains, in trace order.
    pub fn clocks(&self) -> &[ClockId] {
        &self.clocks
    }

    /// Generates run `index` deterministically.
    pub fn run(&self, index: u64) -> Result<SimOutcome, SimError> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        self.run_with(&mut rng)
    }

    /// Generates runs `0..count` in parallel; the result is identical to
    /// calling [`Simulator::run`] for each index in turn.
    pub fn batch(&self, count: u64) -> Result<Vec<SimOutcome>, SimError> {
        (0..count)
            .into_par_iter()
            .map(|i| self.run(i))
            .collect()
    }

    fn run_with(&self, rng: &mut ChaCha12Rng) -> Result<SimOutcome, SimError> {
        let horizon = f64::from(self.bound);
        let n = self.autos.len();
        let mut vars = self.var_init.clone();
        let mut ticks: Vec<Vec<u32>> = vec![Vec::new(); self.clocks.len()];
        let mut deadlocked_at = None;

        let mut loc: Vec<usize> = self.autos.iter().map(|a| a.initial).collect();
        let mut entered: Vec<f64> = vec![0.0; n];
        let mut commitment: Vec<Commitment> = vec![Commitment::Passive; n];
        let mut sig: Vec<u64> = vec![0; n];

        for i in 0..n {
            let (c, s) = self.schedule(i, loc[i], entered[i], 0.0, &vars, rng);
            commitment[i] = c;
            sig[i] = s;
        }

        let mut last_instant = -1.0;
        let mut at_instant: u32 = 0;

        loop {
            // Race: earliest commitment wins; a real firing beats a
            // deadlock at the same instant, since its broadcast may free
            // the blocked automaton.
            let mut winner: Option<(usize, f64, bool)> = None;
            for (i, c) in commitment.iter().enumerate() {
                let (time, dead) = match c {
                    Commitment::Passive => continue,
                    Commitment::Fire(t) => (*t, false),
                    Commitment::Dead(t) => (*t, true),
                };
                let better = match winner {
                    None => true,
                    Some((_, bt, bd)) => time < bt || (time == bt && bd && !dead),
                };
                if better {
                    winner = Some((i, time, dead));
                }
            }
            let (who, now, dead) = match winner {
                Some(w) => w,
                None => break,
            };
            if now >= horizon {
                break;
            }
            if dead {
                deadlocked_at = Some(now);
                break;
            }

            if now == last_instant {
                at_instant += 1;
                if at_instant > SAME_INSTANT_CAP {
                    return Err(SimError::Livelock {
                        time: now,
                        count: at_instant,
                    });
                }
            } else {
                last_instant = now;
                at_instant = 1;
            }

            let auto = &self.autos[who];
            let x = now - entered[who];
            let eligible: Vec<usize> = auto.out[loc[who]]
                .iter()
                .copied()
                .filter(|&e| {
                    let edge = &auto.edges[e];
                    edge.recv.is_none() && edge.guard <= x && var_guards_hold(edge, &vars)
                })
                .collect();
            if eligible.is_empty() {
                // A variable changed under the sampled commitment; start over
                // from the current instant.
                let (c, s) = self.schedule(who, loc[who], entered[who], now, &vars, rng);
                commitment[who] = c;
                sig[who] = s;
                continue;
            }
            let chosen = &auto.edges[pick_weighted(&eligible, &auto.edges, rng)];
            apply_updates(chosen, &mut vars);
            for &clock in &chosen.ticks {
                push_tick(&mut ticks[clock], now as u32);
            }
            let mut moved = vec![false; n];
            loc[who] = chosen.to;
            entered[who] = now;
            moved[who] = true;

            if let Some(channel) = &chosen.emit {
                for r in (0..n).filter(|&r| r != who) {
                    let rauto = &self.autos[r];
                    let rx = now - entered[r];
                    let receiving: Vec<usize> = rauto.out[loc[r]]
                        .iter()
                        .copied()
                        .filter(|&e| {
                            let edge = &rauto.edges[e];
                            edge.recv.as_deref() == Some(channel)
                                && edge.guard <= rx
                                && var_guards_hold(edge, &vars)
                        })
                        .collect();
                    if receiving.is_empty() {
                        continue;
                    }
                    let taken = &rauto.edges[pick_weighted(&receiving, &rauto.edges, rng)];
                    apply_updates(taken, &mut vars);
                    for &clock in &taken.ticks {
                        push_tick(&mut ticks[clock], now as u32);
                    }
                    loc[r] = taken.to;
                    entered[r] = now;
                    moved[r] = true;
                }
            }

            // Movers need fresh commitments; stationary automata only when a
            // variable write changed what they could fire.
            for i in 0..n {
                if moved[i] {
                    let (c, s) = self.schedule(i, loc[i], entered[i], now, &vars, rng);
                    commitment[i] = c;
                    sig[i] = s;
                } else {
                    let fresh = self.active_signature(i, loc[i], &vars);
                    if fresh != sig[i] {
                        let (c, s) = self.schedule(i, loc[i], entered[i], now, &vars, rng);
                        commitment[i] = c;
                        sig[i] = s;
                    }
                }
            }
        }

        let run = Run::from_tick_lists(
            self.clocks.iter().cloned().zip(ticks),
            self.bound - 1,
        )
        .expect("simulator emits in-range, strictly increasing ticks");
        Ok(SimOutcome { run, deadlocked_at })
    }

    /// Bitmask over a location's out-edges of which could fire on their own
    /// under the current variables. Commitments are resampled when this
    /// changes.
    fn active_signature(&self, i: usize, loc: usize, vars: &[i64]) -> u64 {
        let auto = &self.autos[i];
        let mut mask = 0u64;
        for (bit, &e) in auto.out[loc].iter().enumerate() {
            let edge = &auto.edges[e];
            if edge.recv.is_none() && var_guards_hold(edge, vars) {
                mask |= 1 << bit;
            }
        }
        mask
    }

    fn schedule(
        &self,
        i: usize,
        loc: usize,
        entered: f64,
        now: f64,
        vars: &[i64],
        rng: &mut ChaCha12Rng,
    ) -> (Commitment, u64) {
        let auto = &self.autos[i];
        let sig = self.active_signature(i, loc, vars);
        let invariant = auto.invariant[loc];
        let deadline = invariant.map(|u| entered + u);

        let mut g_min = f64::INFINITY;
        for (bit, &e) in auto.out[loc].iter().enumerate() {
            if sig & (1 << bit) == 0 {
                continue;
            }
            let guard_at = entered + auto.edges[e].guard;
            // Edges whose guard opens after the invariant expires can never
            // fire from this entry.
            if deadline.map_or(true, |d| guard_at <= d) {
                g_min = g_min.min(guard_at);
            }
        }

        if g_min.is_infinite() {
            let c = match deadline {
                Some(d) => Commitment::Dead(d),
                None => Commitment::Passive,
            };
            return (c, sig);
        }

        let lo = now.max(g_min);
        let c = match deadline {
            Some(hi) => {
                if hi > lo {
                    Commitment::Fire(rng.gen_range(lo..=hi))
                } else {
                    Commitment::Fire(lo)
                }
            }
            None => {
                let rate = auto.rate[loc].expect("validated: unbounded active location has a rate");
                let u: f64 = rng.gen();
                Commitment::Fire(lo - (1.0 - u).ln() / rate)
            }
        };
        (c, sig)
    }
}

fn var_guards_hold(edge: &CompiledEdge, vars: &[i64]) -> bool {
    edge.when.iter().all(|&(v, want)| vars[v] == want)
}

fn apply_updates(edge: &CompiledEdge, vars: &mut [i64]) {
    for (target, source) in &edge.updates {
        vars[*target] = match source {
            Source::Const(v) => *v,
            Source::Var(from) => vars[*from],
        };
    }
}

fn push_tick(list: &mut Vec<u32>, step: u32) {
    if list.last() != Some(&step) {
        list.push(step);
    }
}

/// Weighted pick among `candidates`; consumes randomness only when there is
/// an actual choice.
fn pick_weighted(candidates: &[usize], edges: &[CompiledEdge], rng: &mut ChaCha12Rng) -> usize {
    if candidates.len() == 1 {
        return candidates[0];
    }
    let total: f64 = candidates.iter().map(|&e| edges[e].weight).sum();
    let mut point = rng.gen::<f64>() * total;
    for &e in candidates {
        point -= edges[e].weight;
        if point <= 0.0 {
            return e;
        }
    }
    *candidates.last().unwrap()
}

fn compile_automaton(
    a: &Automaton,
    map: &EventMap,
    clock_index: &HashMap<&str, usize>,
    var_index: &HashMap<&str, usize>,
) -> CompiledAutomaton {
    let loc_index: HashMap<&str, usize> = a
        .locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.name.as_str(), i))
        .collect();
    let mut out = vec![Vec::new(); a.locations.len()];
    let edges = a
        .edges
        .iter()
        .enumerate()
        .map(|(idx, e)| {
            out[loc_index[e.from.as_str()]].push(idx);
            let mut tick_set = BTreeSet::new();
            if let Some(label) = &e.label {
                if let Some(clocks) = map.edges.get(label) {
                    tick_set.extend(clocks.iter().map(|c| clock_index[c.as_str()]));
                }
            }
            if let Some(channel) = &e.emit {
                if let Some(clock) = map.channels.get(channel) {
                    tick_set.insert(clock_index[clock.as_str()]);
                }
            }
            CompiledEdge {
                to: loc_index[e.to.as_str()],
                emit: e.emit.clone(),
                recv: e.recv.clone(),
                guard: e.guard,
                when: e
                    .when
                    .iter()
                    .map(|g| (var_index[g.var.as_str()], g.is))
                    .collect(),
                weight: e.weight,
                updates: e
                    .updates
                    .iter()
                    .map(|u| match u {
                        Update::Const { set, value } => {
                            (var_index[set.as_str()], Source::Const(*value))
                        }
                        Update::Copy { set, from } => {
                            (var_index[set.as_str()], Source::Var(var_index[from.as_str()]))
                        }
                    })
                    .collect(),
                ticks: tick_set.into_iter().collect(),
            }
        })
        .collect();
    CompiledAutomaton {
        initial: loc_index[a.initial.as_str()],
        out,
        edges,
        invariant: a.locations.iter().map(|l| l.invariant).collect(),
        rate: a.locations.iter().map(|l| l.rate).collect(),
    }
}

fn validate_model(model: &StaModel) -> Result<(), SimError> {
    let invalid = |msg: String| Err(SimError::InvalidModel(msg));
    if model.automata.is_empty() {
        return invalid("no automata".into());
    }
    let mut auto_names = BTreeSet::new();
    for a in &model.automata {
        if !auto_names.insert(&a.name) {
            return invalid(format!("duplicate automaton `{}`", a.name));
        }
    }
    let mut var_names = BTreeSet::new();
    for v in &model.variables {
        if !var_names.insert(v.name.as_str()) {
            return invalid(format!("duplicate variable `{}`", v.name));
        }
    }
    for a in &model.automata {
        let mut locs = BTreeSet::new();
        for l in &a.locations {
            if !locs.insert(l.name.as_str()) {
                return invalid(format!("{}: duplicate location `{}`", a.name, l.name));
            }
            if let Some(u) = l.invariant {
                if !u.is_finite() || u < 0.0 {
                    return invalid(format!("{}.{}: invariant must be finite and nonnegative", a.name, l.name));
                }
                if l.rate.is_some() {
                    return invalid(format!("{}.{}: invariant and rate are mutually exclusive", a.name, l.name));
                }
            }
            if let Some(r) = l.rate {
                if !r.is_finite() || r <= 0.0 {
                    return invalid(format!("{}.{}: rate must be finite and positive", a.name, l.name));
                }
            }
        }
        if !locs.contains(a.initial.as_str()) {
            return invalid(format!("{}: unknown initial location `{}`", a.name, a.initial));
        }
        let mut out_degree: BTreeMap<&str, (usize, bool)> = BTreeMap::new();
        for e in &a.edges {
            if !locs.contains(e.from.as_str()) || !locs.contains(e.to.as_str()) {
                return invalid(format!("{}: edge endpoint not a location", a.name));
            }
            if e.emit.is_some() && e.recv.is_some() {
                return invalid(format!("{}: edge both emits and receives", a.name));
            }
            if !e.guard.is_finite() || e.guard < 0.0 {
                return invalid(format!("{}: guard must be finite and nonnegative", a.name));
            }
            if !e.weight.is_finite() || e.weight <= 0.0 {
                return invalid(format!("{}: weight must be finite and positive", a.name));
            }
            for g in &e.when {
                if !var_names.contains(g.var.as_str()) {
                    return invalid(format!("{}: guard on unknown variable `{}`", a.name, g.var));
                }
            }
            for u in &e.updates {
                let (set, from) = match u {
                    Update::Const { set, .. } => (set, None),
                    Update::Copy { set, from } => (set, Some(from)),
                };
                if !var_names.contains(set.as_str()) {
                    return invalid(format!("{}: update of unknown variable `{}`", a.name, set));
                }
                if let Some(from) = from {
                    if !var_names.contains(from.as_str()) {
                        return invalid(format!("{}: update from unknown variable `{}`", a.name, from));
                    }
                }
            }
            let entry = out_degree.entry(e.from.as_str()).or_insert((0, false));
            entry.0 += 1;
            entry.1 |= e.recv.is_none();
        }
        for l in &a.locations {
            let (count, any_active) = out_degree.get(l.name.as_str()).copied().unwrap_or((0, false));
            if count > 64 {
                return invalid(format!("{}.{}: more than 64 outgoing edges", a.name, l.name));
            }
            if any_active && l.invariant.is_none() && l.rate.is_none() {
                return invalid(format!(
                    "{}.{}: locations with self-firing edges need an invariant or a rate",
                    a.name, l.name
                ));
            }
        }
    }
    Ok(())
}

/// Event-map problems, one message per rule at fault.
pub fn validate_event_map(model: &StaModel, map: &EventMap) -> Vec<String> {
    let mut out = Vec::new();
    let mut emitted = BTreeSet::new();
    let mut labels = BTreeSet::new();
    for a in &model.automata {
        for e in &a.edges {
            if let Some(c) = &e.emit {
                emitted.insert(c.as_str());
            }
            if let Some(l) = &e.label {
                labels.insert(l.as_str());
            }
        }
    }
    // Mapping a rule to the clock name `ms` is allowed: a model may realise
    // the universal clock itself (a unit-period loop). Expression evaluation
    // synthesizes `ms` from step indices either way.
    for channel in map.channels.keys() {
        if !emitted.contains(channel.as_str()) {
            out.push(format!("event map: no edge emits channel `{channel}`"));
        }
    }
    for label in map.edges.keys() {
        if !labels.contains(label.as_str()) {
            out.push(format!("event map: no edge is labelled `{label}`"));
        }
    }
    if map.channels.is_empty() && map.edges.is_empty() {
        out.push("event map: no rules, runs would be empty".into());
    }
    out
}
