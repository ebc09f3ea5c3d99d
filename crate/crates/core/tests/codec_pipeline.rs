use forest_cslam::eval::{epsilon_sweep, fusion_logs, FusionConfig};
use forest_cslam::pipeline::*;
use forest_cslam::submap::*;
use forest_cslam::{Error, Point2, Pose2, RngSeed};
use proptest::prelude::*;

fn arb_submap() -> impl Strategy<Value = Submap> {
    (
        any::<u8>(),
        any::<u16>(),
        (-500.0f64..500.0, -500.0f64..500.0, -3.14f64..3.14),
        prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0, 0.05f64..0.6, 1u32..300), 0..60),
    )
        .prop_map(|(agent, seq, (x, y, th), trees)| {
            let mut s = Submap::without_grid(SubmapId::new(agent, seq), Pose2::new(x, y, th));
            s.trees = trees
                .into_iter()
                .enumerate()
                .map(|(k, (tx, ty, r, n))| TreeTrack { id: k as u32, position: Point2::new(tx, ty), radius: r, observation_count: n })
                .collect();
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn codec_round_trip(s in arb_submap()) {
        let bytes = encode_submap(&s);
        prop_assert_eq!(bytes.len(), HEADER_BYTES + TREE_BYTES * s.trees.len());
        prop_assert_eq!(bytes.len(), encoded_len(s.trees.len()));
        let d = decode_submap(&bytes).unwrap();
        prop_assert_eq!(d.id, s.id);
        prop_assert!((d.origin.x - s.origin_estimate.x).abs() <= 0.5e-3 + 1e-12);
        prop_assert!((d.origin.y - s.origin_estimate.y).abs() <= 0.5e-3 + 1e-12);
        prop_assert!((d.origin.theta - s.origin_estimate.theta).abs() <= 0.5e-6 + 1e-12);
        prop_assert_eq!(d.trees.len(), s.trees.len());
        for (k, (a, b)) in d.trees.iter().zip(&s.trees).enumerate() {
            prop_assert_eq!(a.id, k as u32);
            prop_assert!((a.position.x - b.position.x).abs() <= 0.5e-2 + 1e-12);
            prop_assert!((a.position.y - b.position.y).abs() <= 0.5e-2 + 1e-12);
            prop_assert!((a.radius - b.radius).abs() <= 2.5e-3 + 1e-12);
            prop_assert_eq!(a.observation_count, b.observation_count.min(255));
        }
        // decoding is a fixed point of encoding
        let mut again = Submap::without_grid(d.id, d.origin);
        again.trees = d.trees.clone();
        prop_assert_eq!(encode_submap(&again), bytes);
    }

    #[test]
    fn corrupted_payloads_never_panic(s in arb_submap(), cut in 0usize..200, flip in 0usize..200) {
        let bytes = encode_submap(&s);
        let truncated = &bytes[..cut.min(bytes.len())];
        if truncated.len() < bytes.len() {
            prop_assert!(matches!(decode_submap(truncated), Err(Error::MalformedPayload(_))));
        }
        let mut flipped = bytes.clone();
        let k = flip % flipped.len();
        flipped[k] ^= 0xA5;
        let _ = decode_submap(&flipped);
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(decode_submap(&longer).is_err());
    }
}

fn small_logs(seed: u64) -> Vec<forest_cslam::explore::MissionLog> {
    let cfg = FusionConfig { duration: 60.0, ..FusionConfig::default() };
    fusion_logs(&cfg, RngSeed(seed)).unwrap().1
}

fn replay(logs: &[forest_cslam::explore::MissionLog]) -> PipelineState {
    let mut st = PipelineState::new(FusionConfig::default().pipeline);
    for b in interleave(logs) {
        st.ingest(&b).unwrap();
    }
    st
}

#[test]
fn replay_is_idempotent_and_ledger_conserves_bytes() {
    let logs = small_logs(3);
    let payloads = interleave(&logs);
    assert!(payloads.len() >= 10);
    let a = replay(&logs);
    let b = replay(&logs);
    assert_eq!(a.dump(), b.dump());
    assert_eq!(a.payload_csv(), b.payload_csv());

    let sent: usize = logs.iter().flat_map(|l| &l.submaps).map(|r| r.bytes.len()).sum();
    assert_eq!(a.total_payload(), sent);
    assert_eq!(a.ledger.len(), payloads.len());
    assert_eq!(a.submaps.len(), payloads.len());
    assert_eq!(logs.iter().map(|l| l.payload_bytes()).sum::<usize>(), sent);
    let accepted: usize = a.ledger.iter().map(|r| r.accepted).sum();
    assert_eq!(accepted, a.associations.len());
    assert_eq!(a.solves, a.ledger.iter().filter(|r| r.solved).count());

    // a repeated payload is rejected and leaves the state untouched
    let mut c = replay(&logs);
    let before = c.dump();
    assert!(matches!(c.ingest(&payloads[0]), Err(Error::MalformedPayload(_))));
    assert_eq!(c.dump(), before);
}

#[test]
fn agent_logs_do_not_depend_on_ground_station() {
    let with_gs = small_logs(4);
    let _ = replay(&with_gs);
    let without_gs = small_logs(4);
    assert_eq!(with_gs, without_gs);
}

#[test]
fn stream_framing_round_trip() {
    let logs = small_logs(5);
    let mut streams = Vec::new();
    for l in &logs {
        let mut s = Vec::new();
        for r in &l.submaps {
            s.extend_from_slice(&(r.bytes.len() as u32).to_le_bytes());
            s.extend_from_slice(&r.bytes);
        }
        streams.push(s);
    }
    let mut all = Vec::new();
    for s in streams.iter().rev() {
        all.extend(split_stream(s).unwrap());
    }
    assert_eq!(order_payloads(all).unwrap(), interleave(&logs));
    let cut = &streams[0][..streams[0].len() - 3];
    assert!(matches!(split_stream(cut), Err(Error::MalformedPayload(_))));
}

#[test]
fn clear_dominates_raw_cg_on_missions() {
    let cfg = FusionConfig::default();
    let epsilons = [0.05, 0.1, 0.15, 0.2];
    let mut dominated = 0;
    let mut total = 0;
    for k in 0..6 {
        let (_, logs) = fusion_logs(&cfg, RngSeed(0).nth(k)).unwrap();
        for p in epsilon_sweep(&logs, &epsilons, &cfg.pipeline).unwrap() {
            total += 1;
            if p.clear_dominates() {
                dominated += 1;
            }
        }
    }
    assert!(dominated * 10 >= total * 9, "{dominated}/{total}");
}
