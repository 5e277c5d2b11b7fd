//! Bundled autonomous-vehicle case study.
//!
//! A sign-recognition pipeline (camera, recognition, controller, vehicle
//! dynamics) with periodic triggers, a random traffic-sign environment, and
//! exponential obstacle arrivals, plus the thirty-one timing requirements
//! R1..R31 over its events. The bundle is the end-to-end fixture: the model
//! exercises every simulator feature, and the spec exercises every
//! template, relation, and query kind.
//!
//! All times are milliseconds. Environment parameters the requirements do
//! not fix (obstacle rate, sign-type mix, emergency dwell) are defaults
//! chosen so every event class occurs well inside a 3000 ms run.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expr::ClockExpr;
use crate::relations::{ProbRelation, RelationKind};
use crate::sim::{
    Automaton, Edge, EventMap, Location, ModelFile, StaModel, Update, VarDecl, VarGuard,
};
use crate::spec::{default_probability, ConstraintItem, ConstraintTemplate};
use crate::trace::ClockId;

/// Worst-case execution times, per function: camera, sign recognition,
/// controller, vehicle dynamics. Each equals the upper edge of the
/// corresponding execution window in the model.
pub const W_CMR: u32 = 30;
pub const W_SR: u32 = 150;
pub const W_CTRL: u32 = 150;
pub const W_VD: u32 = 100;

/// WCET table as shipped in `wcet.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcetTable {
    #[serde(rename = "W_cmr")]
    pub w_cmr: u32,
    #[serde(rename = "W_sr")]
    pub w_sr: u32,
    #[serde(rename = "W_ctrl")]
    pub w_ctrl: u32,
    #[serde(rename = "W_vd")]
    pub w_vd: u32,
}

pub fn wcet_table() -> WcetTable {
    WcetTable {
        w_cmr: W_CMR,
        w_sr: W_SR,
        w_ctrl: W_CTRL,
        w_vd: W_VD,
    }
}

/// The requirement spec shipped as `av.prccsl`.
pub const AV_SPEC: &str = include_str!("av.prccsl");

fn loc(name: &str) -> Location {
    Location {
        name: name.into(),
        invariant: None,
        rate: None,
    }
}

fn timed(name: &str, invariant: f64) -> Location {
    Location {
        name: name.into(),
        invariant: Some(invariant),
        rate: None,
    }
}

fn edge(from: &str, to: &str) -> Edge {
    Edge {
        from: from.into(),
        to: to.into(),
        emit: None,
        recv: None,
        label: None,
        guard: 0.0,
        when: vec![],
        weight: 1.0,
        updates: vec![],
    }
}

fn set(var: &str, value: i64) -> Update {
    Update::Const {
        set: var.into(),
        value,
    }
}

fn copy(var: &str, from: &str) -> Update {
    Update::Copy {
        set: var.into(),
        from: from.into(),
    }
}

fn when(var: &str, is: i64) -> Vec<VarGuard> {
    vec![VarGuard {
        var: var.into(),
        is,
    }]
}

/// Emits `channel` at `first`, then every `period` thereafter. Degenerate
/// windows, so the cadence is exact and consumes no randomness.
fn metronome(name: &str, channel: &str, first: f64, period: f64) -> Automaton {
    Automaton {
        name: name.into(),
        initial: "arm".into(),
        locations: vec![timed("arm", first), timed("cycle", period)],
        edges: vec![
            Edge {
                emit: Some(channel.into()),
                guard: first,
                ..edge("arm", "cycle")
            },
            Edge {
                emit: Some(channel.into()),
                guard: period,
                ..edge("cycle", "cycle")
            },
        ],
    }
}

fn traffic_sign() -> Automaton {
    // Sign 0 is "none/straight"; 1..3 are left, right, stop. The mix keeps
    // turn and brake chains frequent enough to observe in every batch.
    let edges = (0..4)
        .map(|k| Edge {
            guard: 4.0,
            weight: if k == 0 { 3.0 } else { 1.0 },
            label: Some("signPick".into()),
            updates: vec![set("sign", k)],
            ..edge("pick", "pick")
        })
        .collect();
    Automaton {
        name: "TrafficSign".into(),
        initial: "pick".into(),
        locations: vec![timed("pick", 8.0)],
        edges,
    }
}

fn camera() -> Automaton {
    Automaton {
        name: "Camera".into(),
        initial: "idle".into(),
        locations: vec![loc("idle"), timed("shoot", f64::from(W_CMR))],
        edges: vec![
            Edge {
                recv: Some("cmrTrig".into()),
                updates: vec![copy("img", "sign")],
                ..edge("idle", "shoot")
            },
            Edge {
                emit: Some("camOut".into()),
                guard: 20.0,
                ..edge("shoot", "idle")
            },
        ],
    }
}

fn sign_recognition() -> Automaton {
    Automaton {
        name: "SignRecognition".into(),
        initial: "idle".into(),
        locations: vec![loc("idle"), loc("armed"), timed("classify", f64::from(W_SR))],
        edges: vec![
            Edge {
                recv: Some("signTrig".into()),
                ..edge("idle", "armed")
            },
            Edge {
                recv: Some("camOut".into()),
                label: Some("srIngest".into()),
                updates: vec![copy("det", "img")],
                ..edge("armed", "classify")
            },
            Edge {
                emit: Some("srOut".into()),
                guard: 100.0,
                ..edge("classify", "idle")
            },
        ],
    }
}

fn controller() -> Automaton {
    let mut edges = Vec::new();
    // Normal mode: ingest the recognised sign and compute a request. The
    // ingest edge observes all five input ports at once.
    for k in 0..4 {
        edges.push(Edge {
            recv: Some("srOut".into()),
            label: Some(format!("ctrlIngest{k}")),
            when: when("det", k),
            updates: vec![set("cmd", k)],
            ..edge("idle", "work")
        });
    }
    for k in 0..4 {
        edges.push(Edge {
            emit: Some("ctrlReq".into()),
            label: Some(format!("ctrlDone{k}")),
            guard: 100.0,
            when: when("cmd", k),
            ..edge("work", "idle")
        });
    }
    // Emergency mode: an obstacle pre-empts the idle controller, brakes,
    // and after a lockout resumes in one of four ways. Obstacles arriving
    // mid-computation or mid-emergency are lost on purpose.
    edges.push(Edge {
        recv: Some("obstacleSig".into()),
        label: Some("ctrlEmergency".into()),
        ..edge("idle", "emergency")
    });
    for (label, weight) in [
        ("emergeRun", 4.0),
        ("emergeAcc", 2.0),
        ("emergeLeft", 2.0),
        ("emergeRight", 2.0),
    ] {
        edges.push(Edge {
            label: Some(label.into()),
            guard: 550.0,
            weight,
            ..edge("emergency", "idle")
        });
    }
    Automaton {
        name: "Controller".into(),
        initial: "idle".into(),
        locations: vec![
            loc("idle"),
            timed("work", f64::from(W_CTRL)),
            timed("emergency", 700.0),
        ],
        edges,
    }
}

fn vehicle_dynamic() -> Automaton {
    // `act` latches the command at ingest; the controller may overwrite
    // `cmd` with its next request while actuation is still in flight.
    let mut edges = vec![Edge {
        recv: Some("ctrlReq".into()),
        label: Some("vdIngest".into()),
        updates: vec![copy("act", "cmd")],
        ..edge("idle", "actuate")
    }];
    for k in 0..4 {
        edges.push(Edge {
            label: Some(format!("vdDone{k}")),
            guard: 50.0,
            when: when("act", k),
            ..edge("actuate", "idle")
        });
    }
    Automaton {
        name: "VehicleDynamic".into(),
        initial: "idle".into(),
        locations: vec![loc("idle"), timed("actuate", f64::from(W_VD))],
        edges,
    }
}

fn obstacle() -> Automaton {
    // Mean inter-arrival 600 ms.
    Automaton {
        name: "Obstacle".into(),
        initial: "wait".into(),
        locations: vec![Location {
            name: "wait".into(),
            invariant: None,
            rate: Some(1.0 / 600.0),
        }],
        edges: vec![Edge {
            emit: Some("obstacleSig".into()),
            ..edge("wait", "wait")
        }],
    }
}

/// The complete model and its event map.
///
/// Construction is deterministic: two calls yield identical values, and the
/// serialized form is byte-stable.
pub fn build_av_bundle() -> (StaModel, EventMap) {
    let model = StaModel {
        // Metronomes first: their degenerate windows make the trigger grid
        // exact, and ties at shared instants resolve toward them.
        automata: vec![
            metronome("CameraTrigger", "cmrTrig", 49.0, 50.0),
            metronome("SignTrigger", "signTrig", 199.0, 200.0),
            metronome("ObstacleDetector", "obsDetect", 39.0, 40.0),
            metronome("Speed", "spUpdate", 29.0, 30.0),
            traffic_sign(),
            camera(),
            sign_recognition(),
            controller(),
            vehicle_dynamic(),
            obstacle(),
        ],
        variables: ["sign", "img", "det", "cmd", "act"]
            .into_iter()
            .map(|name| VarDecl {
                name: name.into(),
                init: 0,
            })
            .collect(),
    };

    let mut map = EventMap::default();
    for (channel, clock) in [
        ("cmrTrig", "cmrTrig"),
        ("signTrig", "signTrig"),
        ("obsDetect", "obsDetect"),
        ("spUpdate", "spUpdate"),
        ("camOut", "cmrOut"),
        ("srOut", "signOut"),
        ("ctrlReq", "ctrlOut"),
        ("obstacleSig", "obstc"),
    ] {
        map.channels.insert(channel.into(), clock.into());
    }
    let ctrl_inputs = [
        "ctrlIn", "speedIn", "signIn", "directIn", "gearIn", "torqueIn",
    ];
    let requests = ["reqTorq", "reqDirect", "reqGear", "reqBrake"];
    let vd_outputs = ["vdOut", "spOut", "directOut", "gearOut", "torqueOut"];
    let mut rule = |label: &str, clocks: &[&str]| {
        map.edges
            .insert(label.into(), clocks.iter().map(|c| c.to_string()).collect());
    };
    rule("signPick", &["signEmit"]);
    rule("srIngest", &["imIn"]);
    rule("ctrlIngest0", &ctrl_inputs);
    rule("ctrlIngest1", &[&ctrl_inputs[..], &["DetectLeftSign"]].concat());
    rule("ctrlIngest2", &[&ctrl_inputs[..], &["DetectRightSign"]].concat());
    rule("ctrlIngest3", &[&ctrl_inputs[..], &["DetectStopSign"]].concat());
    rule("ctrlDone0", &requests);
    rule("ctrlDone1", &requests);
    rule("ctrlDone2", &requests);
    rule("ctrlDone3", &[&requests[..], &["StartBrake", "veBrake"]].concat());
    rule("ctrlEmergency", &["emgcy", "veBrake"]);
    rule("emergeRun", &["veRun"]);
    rule("emergeAcc", &["veRun", "veAcc"]);
    rule("emergeLeft", &["veRun", "tLeft"]);
    rule("emergeRight", &["veRun", "tRight"]);
    rule("vdIngest", &["vdIn"]);
    rule("vdDone0", &vd_outputs);
    rule("vdDone1", &[&vd_outputs[..], &["StartTurnLeft", "turnLeft"]].concat());
    rule("vdDone2", &[&vd_outputs[..], &["StartTurnRight", "rightOn"]].concat());
    rule("vdDone3", &[&vd_outputs[..], &["Stop"]].concat());

    (model, map)
}

fn template(t: ConstraintTemplate) -> ConstraintItem {
    ConstraintItem::Template(t)
}

fn periodic(event: &str, period: u32) -> ConstraintItem {
    template(ConstraintTemplate::Periodic {
        event: ClockId::new(event),
        period,
        prob: default_probability(),
    })
}

fn execution(start: &str, end: &str, lower: u32, upper: u32) -> ConstraintItem {
    template(ConstraintTemplate::Execution {
        start: ClockId::new(start),
        end: ClockId::new(end),
        lower,
        upper,
        prob: default_probability(),
    })
}

fn sporadic(source: &str, target: &str, gap: u32) -> ConstraintItem {
    template(ConstraintTemplate::Sporadic {
        source: ClockId::new(source),
        target: ClockId::new(target),
        gap,
        prob: default_probability(),
    })
}

fn synchronization(events: &[&str], tolerance: u32) -> ConstraintItem {
    template(ConstraintTemplate::Synchronization {
        events: events.iter().map(ClockId::new).collect(),
        tolerance,
        prob: default_probability(),
    })
}

fn e2e(source: &str, target: &str, lower: Option<u32>, upper: u32) -> ConstraintItem {
    template(ConstraintTemplate::EndToEnd {
        source: ClockId::new(source),
        target: ClockId::new(target),
        lower,
        upper,
        prob: default_probability(),
    })
}

fn comparison(event: &str, bound: u32, wcet_sum: u32) -> ConstraintItem {
    template(ConstraintTemplate::Comparison {
        event: ClockId::new(event),
        bound,
        wcet_sum,
        prob: default_probability(),
    })
}

fn exclusion(left: &str, right: &str) -> ConstraintItem {
    template(ConstraintTemplate::Exclusion {
        left: ClockId::new(left),
        right: ClockId::new(right),
        prob: default_probability(),
    })
}

/// The thirty-one requirements, in order. R2 is the containment reading
/// (every recognition trigger falls on a camera trigger); the periodic
/// reading ships alongside it in `av.prccsl` as `R2periodic`.
pub fn r_spec_table() -> Vec<(String, ConstraintItem)> {
    let r2 = ConstraintItem::Relation(ProbRelation {
        kind: RelationKind::Subclock,
        left: ClockExpr::clock("signTrig"),
        right: ClockExpr::clock("cmrTrig"),
        prob: default_probability(),
    });
    let rows: Vec<(&str, ConstraintItem)> = vec![
        ("R1", periodic("cmrTrig", 50)),
        ("R2", r2),
        ("R3", periodic("obsDetect", 40)),
        ("R4", periodic("spUpdate", 30)),
        ("R5", execution("imIn", "signOut", 100, 150)),
        ("R6", execution("cmrTrig", "cmrOut", 20, 30)),
        ("R7", execution("ctrlIn", "ctrlOut", 100, 150)),
        ("R8", execution("vdIn", "vdOut", 50, 100)),
        ("R9", sporadic("obstc", "veRun", 500)),
        ("R10", sporadic("obstc", "veAcc", 500)),
        ("R11", sporadic("obstc", "tLeft", 500)),
        ("R12", sporadic("obstc", "tRight", 500)),
        (
            "R13",
            synchronization(&["speedIn", "signIn", "directIn", "gearIn", "torqueIn"], 40),
        ),
        (
            "R14",
            synchronization(&["reqTorq", "reqDirect", "reqGear", "reqBrake"], 30),
        ),
        (
            "R15",
            synchronization(&["reqTorq", "reqDirect", "reqGear", "reqBrake"], 40),
        ),
        (
            "R16",
            synchronization(&["spOut", "directOut", "gearOut", "torqueOut"], 40),
        ),
        ("R17", e2e("signIn", "spOut", Some(150), 250)),
        ("R18", e2e("cmrTrig", "signOut", Some(120), 180)),
        ("R19", e2e("cmrTrig", "spOut", Some(270), 430)),
        ("R20", e2e("DetectLeftSign", "StartTurnLeft", None, 500)),
        ("R21", e2e("DetectRightSign", "StartTurnRight", None, 500)),
        ("R22", e2e("DetectStopSign", "StartBrake", None, 200)),
        ("R23", e2e("DetectStopSign", "Stop", None, 3000)),
        ("R24", comparison("signIn", 250, W_CTRL + W_VD)),
        ("R25", comparison("cmrTrig", 180, W_CMR + W_SR)),
        (
            "R26",
            comparison("cmrTrig", 430, W_CMR + W_SR + W_CTRL + W_VD),
        ),
        ("R27", exclusion("turnLeft", "rightOn")),
        ("R28", exclusion("veAcc", "veBrake")),
        ("R29", exclusion("emgcy", "turnLeft")),
        ("R30", exclusion("emgcy", "rightOn")),
        ("R31", exclusion("emgcy", "veAcc")),
    ];
    rows.into_iter().map(|(id, item)| (id.into(), item)).collect()
}

/// Writes `av.model.json`, `av.prccsl`, and `wcet.json` into `dir`.
pub fn write_bundle(dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let (model, events) = build_av_bundle();
    let model_json =
        serde_json::to_string_pretty(&ModelFile { model, events }).expect("model serializes");
    let wcet_json = serde_json::to_string_pretty(&wcet_table()).expect("table serializes");
    std::fs::write(dir.join("av.model.json"), model_json + "\n")?;
    std::fs::write(dir.join("av.prccsl"), AV_SPEC)?;
    std::fs::write(dir.join("wcet.json"), wcet_json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Simulator;
    use crate::spec::{parse_spec, validate_spec};
    use crate::trace::Run;
    use std::collections::BTreeSet;

    fn bundle_run(seed_index: u64, bound: u32) -> Run {
        let (model, map) = build_av_bundle();
        let sim = Simulator::new(&model, &map, bound, 42).unwrap();
        sim.run(seed_index).unwrap().run
    }

    #[test]
    fn model_and_event_map_validate() {
        let (model, map) = build_av_bundle();
        Simulator::new(&model, &map, 3000, 42).unwrap();
    }

    #[test]
    fn spec_text_parses_validates_and_matches_the_table() {
        let spec = parse_spec(AV_SPEC).unwrap();
        let diags = validate_spec(&spec);
        assert!(diags.is_empty(), "{diags:?}");
        let table = r_spec_table();
        assert_eq!(table.len(), 31);
        for (id, item) in &table {
            let named = spec.constraint(id).unwrap_or_else(|| panic!("{id} missing"));
            assert_eq!(&named.item, item, "{id}");
        }
        // R2periodic rides along in the file only.
        assert_eq!(spec.constraints.len(), 32);
        assert!(spec.constraint("R2periodic").is_some());
        for q in ["HT_R1", "HT_R2", "HT_R6", "HT_R9", "HT_R27", "EST_R17", "CMP_R1_R2", "EV_GAP", "DEMO"] {
            assert!(spec.query(q).is_some(), "{q} missing");
        }
    }

    #[test]
    fn table_rows_expand_to_the_intended_relations() {
        let ms = ClockExpr::ms;
        let by_id = |id: &str| {
            r_spec_table()
                .into_iter()
                .find(|(name, _)| name == id)
                .unwrap()
                .1
                .relations()
        };
        assert_eq!(
            by_id("R9"),
            vec![ProbRelation {
                kind: RelationKind::Precedence,
                left: ClockExpr::delay_for(ClockExpr::clock("obstc"), 500, ms()),
                right: ClockExpr::clock("veRun"),
                prob: default_probability(),
            }]
        );
        assert_eq!(
            by_id("R24"),
            vec![ProbRelation {
                kind: RelationKind::Causality,
                left: ClockExpr::delay_for(ClockExpr::clock("signIn"), 250, ms()),
                right: ClockExpr::delay_for(ClockExpr::clock("signIn"), 250, ms()),
                prob: default_probability(),
            }]
        );
        assert_eq!(
            by_id("R27"),
            vec![ProbRelation {
                kind: RelationKind::Exclusion,
                left: ClockExpr::clock("turnLeft"),
                right: ClockExpr::clock("rightOn"),
                prob: default_probability(),
            }]
        );
    }

    #[test]
    fn camera_trigger_grid_is_exact() {
        let run = bundle_run(0, 3000);
        let ticks = run.tick_list(&ClockId::new("cmrTrig")).unwrap();
        assert_eq!(ticks.len(), 60);
        assert_eq!(ticks[0], 49);
        assert!(ticks.windows(2).all(|w| w[1] - w[0] == 50));
    }

    #[test]
    fn camera_execution_lands_in_its_window() {
        let run = bundle_run(1, 3000);
        let trig = run.tick_list(&ClockId::new("cmrTrig")).unwrap();
        let out = run.tick_list(&ClockId::new("cmrOut")).unwrap();
        // The output of the final trigger may fall past the horizon.
        assert!(trig.len() - out.len() <= 1);
        for (t, o) in trig.iter().zip(out.iter()) {
            let d = o - t;
            assert!((20..=30).contains(&d), "exec took {d}");
        }
    }

    #[test]
    fn traffic_sign_emissions_keep_their_pace() {
        let run = bundle_run(2, 3000);
        let ticks = run.tick_list(&ClockId::new("signEmit")).unwrap();
        assert!(ticks.len() > 300);
        // A continuous gap in [4, 8] floors to a step gap in [3, 8].
        for w in ticks.windows(2) {
            let gap = w[1] - w[0];
            assert!((3..=8).contains(&gap), "gap {gap}");
        }
        let mean = (ticks[ticks.len() - 1] - ticks[0]) as f64 / (ticks.len() - 1) as f64;
        assert!((mean - 6.0).abs() < 0.5, "mean gap {mean}");
    }

    #[test]
    fn every_mapped_clock_occurs_within_fifty_runs() {
        let (model, map) = build_av_bundle();
        let sim = Simulator::new(&model, &map, 3000, 42).unwrap();
        let mut unseen: BTreeSet<ClockId> = map.clocks().into_iter().collect();
        for outcome in sim.batch(50).unwrap() {
            assert_eq!(outcome.deadlocked_at, None);
            unseen.retain(|c| outcome.run.tick_list(c).map_or(true, |t| t.is_empty()));
            if unseen.is_empty() {
                break;
            }
        }
        assert!(unseen.is_empty(), "never ticked: {unseen:?}");
    }

    #[test]
    fn requirement_profile_over_a_batch() {
        let (model, map) = build_av_bundle();
        let sim = Simulator::new(&model, &map, 3000, 42).unwrap();
        let spec = parse_spec(AV_SPEC).unwrap();
        let runs: Vec<Run> = sim.batch(30).unwrap().into_iter().map(|o| o.run).collect();
        let holds = |id: &str| -> usize {
            let m = crate::monitor::Monitor::from_ref(
                &spec,
                &crate::spec::MonitorRef::Constraint(id.into()),
            )
            .unwrap();
            runs.iter()
                .filter(|r| m.satisfied(r, &spec.defs).unwrap())
                .count()
        };
        for id in ["R1", "R2", "R2periodic", "R3", "R4", "R6", "R9", "R27"] {
            assert_eq!(holds(id), 30, "{id}");
        }
        // Infeasible by construction: a 50 ms trigger against 200 ms
        // pipelines.
        assert_eq!(holds("R18"), 0);
        assert_eq!(holds("R19"), 0);
    }

    #[test]
    fn written_bundle_round_trips(){
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("av.model.json")).unwrap();
        let file: ModelFile = serde_json::from_str(&text).unwrap();
        let (model, events) = build_av_bundle();
        assert_eq!(file, ModelFile { model, events });
        let wcet: WcetTable =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("wcet.json")).unwrap())
                .unwrap();
        assert_eq!(wcet, wcet_table());
        assert_eq!(
            std::fs::read_to_string(dir.path().join("av.prccsl")).unwrap(),
            AV_SPEC
        );
    }
}
