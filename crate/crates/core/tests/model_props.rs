use proptest::prelude::*;

use qstar::cloud::{
    create_ibmq_node, estimate_execution_time, submit, Broker, NodeCatalog, NodeSpec, QNode, QTask,
    SimEvent,
};
use qstar::engine::{Engine, SimTime};

fn task(id: u64, at: f64, qubits: u32, depth: u64, shots: u64) -> QTask {
    QTask {
        id,
        arrival_at: SimTime::new(at),
        qubit_count: qubits,
        depth1_layers: depth,
        shots,
        app_tag: "p".into(),
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

fn node_names() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["washington", "kolkata", "hanoi", "perth", "lagos"])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn execution_time_is_linear(depth in 0u64..100_000, shots in 1u64..100_000, k in 1u64..64, name in node_names()) {
        let node = create_ibmq_node(name).unwrap();
        let base = estimate_execution_time(&task(0, 0.0, 1, depth, shots), &node);
        let scaled_depth = estimate_execution_time(&task(0, 0.0, 1, depth * k, shots), &node);
        let scaled_shots = estimate_execution_time(&task(0, 0.0, 1, depth, shots * k), &node);
        prop_assert!(rel_eq(scaled_depth, k as f64 * base));
        prop_assert!(rel_eq(scaled_shots, k as f64 * base));
        prop_assert!(rel_eq(base, (depth * shots) as f64 / node.d1cps));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fifo_never_overlaps_and_engine_agrees(
        gaps in prop::collection::vec(0.0f64..3.0, 1..60),
        works in prop::collection::vec((1u64..400, 1u64..2000), 60),
        d1cps in 1_000.0f64..60_000.0,
    ) {
        let spec = NodeSpec::new("n", 27, 32, 1000.0, d1cps);
        let mut broker = Broker::new(vec![QNode::from_spec(0, &spec)]);
        let mut engine: Engine<SimEvent> = Engine::new();
        let mut at = 0.0;
        let mut records = Vec::new();
        for (i, gap) in gaps.iter().enumerate() {
            at += gap;
            let (depth, shots) = works[i];
            let t = task(i as u64, at, 5, depth, shots);
            engine.run_until(SimTime::new(at), |_, ev| broker.on_event(&ev));
            records.push(broker.dispatch(&t, 0, SimTime::new(at), &mut engine));
        }
        engine.run_to_completion(|_, ev| broker.on_event(&ev));
        prop_assert_eq!(broker.completed(), records.len() as u64);
        prop_assert!(broker.nodes()[0].fifo_queue.is_empty());

        let mut prev_end = 0.0;
        for r in &records {
            let t = r.timing.unwrap();
            prop_assert_eq!(t.completion_s, t.wait_s + t.exec_s);
            prop_assert!(t.start_at.seconds() >= prev_end);
            prop_assert!(t.start_at.seconds() >= r.dispatch_at.seconds());
            prev_end = t.start_at.seconds() + t.exec_s;
            let seen = broker.observed(r.task_id).unwrap();
            prop_assert_eq!(seen.started_at, Some(t.start_at));
            prop_assert!((seen.completed_at.unwrap().seconds() - (r.dispatch_at.seconds() + t.completion_s)).abs() < 1e-9);
        }
    }

    #[test]
    fn capacity_is_monotone(qubits in 1u32..200, name in node_names(), other in node_names()) {
        let a = create_ibmq_node(name).unwrap();
        let b = create_ibmq_node(other).unwrap();
        let t = task(0, 0.0, qubits, 10, 10);
        if !a.can_host(&t) && b.qubit_count <= a.qubit_count {
            prop_assert!(!b.can_host(&t));
        }
        prop_assert_eq!(a.can_host(&t), qubits <= a.qubit_count);
    }

    #[test]
    fn failed_submission_changes_nothing(qubits in 8u32..200, busy_until in 0.0f64..50.0) {
        let mut node = create_ibmq_node("perth").unwrap();
        let mut engine: Engine<SimEvent> = Engine::new();
        let warm = task(99, 0.0, 2, 1000, (busy_until * 57.905).ceil() as u64 + 1);
        submit(&warm, &mut node, SimTime::ZERO, &mut engine);
        let (node_before, engine_before) = (node.clone(), engine.clone());
        let r = submit(&task(1, 0.0, qubits, 5, 5), &mut node, SimTime::ZERO, &mut engine);
        prop_assert!(!r.success());
        prop_assert_eq!(node, node_before);
        prop_assert_eq!(engine, engine_before);
    }

    #[test]
    fn engine_orders_by_time_then_insertion(times in prop::collection::vec(0u8..20, 1..200)) {
        let mut e: Engine<usize> = Engine::new();
        for (i, &t) in times.iter().enumerate() {
            e.schedule(SimTime::new(t as f64), i).unwrap();
        }
        let mut fired = Vec::new();
        e.run_to_completion(|eng, ev| {
            assert_eq!(eng.now(), ev.fire_at);
            fired.push((times[ev.payload], ev.payload));
        });
        let mut expected = fired.clone();
        expected.sort();
        prop_assert_eq!(fired, expected);
    }
}

#[test]
fn catalog_file_roundtrip() {
    let cat = NodeCatalog::ibm_quantum();
    assert_eq!(NodeCatalog::from_json_str(&cat.to_json()).unwrap(), cat);
    assert!(NodeCatalog::from_json_str(
        r#"[{"name":"x","qubits":5,"qv":8,"clops":1,"d1cps":1,"extra":0}]"#
    )
    .is_err());
}
