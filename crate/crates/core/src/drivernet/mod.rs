//! Emulated motor-driver boards: two joints per board, state shared around a
//! unidirectional ring, each board evaluating its own rows of `τ = A·x + b`.

mod codec;
mod network;

pub use codec::{
    crc16, decode_packet, encode_packet, CodecError, JointSample, LawRecord, LawRecordError,
    StatePacket, FRAME_OVERHEAD, HEADER, JOINT_RECORD_LEN, MAX_FRAME_LEN,
};
pub use network::{
    BoardConfig, DriverNetwork, LawRows, NetworkConfig, NetworkError, WireFormat, JOINTS_PER_BOARD,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::affine_apply;
    use crate::linearize::LinearFeedbackLaw;
    use crate::rbd::JointState;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(hop_delay: usize, decimation: usize, wire: WireFormat) -> NetworkConfig {
        NetworkConfig {
            hop_delay,
            decimation,
            wire,
            ..Default::default()
        }
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> JointState<f64> {
        JointState::new(
            DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            DVector::from_fn(n, |_, _| rng.random_range(-20.0..20.0)),
        )
        .unwrap()
    }

    fn random_law(rng: &mut ChaCha8Rng, n: usize, sequence: u32) -> LinearFeedbackLaw<f64> {
        LinearFeedbackLaw::new(
            DMatrix::from_fn(n, 2 * n, |_, _| rng.random_range(-50.0..50.0)),
            DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            JointState::zeros(n),
            0.0,
            sequence,
        )
        .unwrap()
    }

    /// State where joint `j` sits at `100·j + tick` and moves at `j`.
    fn ramp(tick: u64, n: usize) -> JointState<f64> {
        JointState::new(
            DVector::from_fn(n, |j, _| 100.0 * j as f64 + tick as f64),
            DVector::from_fn(n, |j, _| j as f64),
        )
        .unwrap()
    }

    #[test]
    fn zero_delay_views_equal_truth() {
        for wire in [WireFormat::Ideal, WireFormat::Float32] {
            let mut net = DriverNetwork::<f64>::chain(3, config(0, 1, wire)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..50 {
                let x = random_state(&mut rng, 6);
                net.tick_full(&x).unwrap();
                let truth = wire.quantize_vec(&x.stacked());
                for b in 0..3 {
                    assert_eq!(net.view(b), &truth);
                    assert!(net.slice_ages(b).iter().all(|&a| a == 0));
                }
            }
        }
    }

    #[test]
    fn one_hop_delay_follows_the_ring_schedule() {
        let mut net = DriverNetwork::<f64>::chain(3, config(1, 1, WireFormat::Ideal)).unwrap();
        for tick in 0..10u64 {
            net.tick_full(&ramp(tick, 6)).unwrap();
            // hops from board j to board i: (i − j) mod 3
            for i in 0..3usize {
                for j in 0..3usize {
                    let hops = ((i + 3 - j) % 3) as u64;
                    let seen_tick = tick.saturating_sub(hops);
                    let view = net.view(i);
                    for joint in [2 * j, 2 * j + 1] {
                        assert_eq!(view[joint], 100.0 * joint as f64 + seen_tick as f64);
                        assert_eq!(view[6 + joint], joint as f64);
                    }
                }
            }
        }
        assert_eq!(net.slice_ages(0), vec![0, 2, 1]);
        assert_eq!(net.slice_ages(1), vec![1, 0, 2]);
    }

    #[test]
    fn single_board_sees_itself() {
        for d in [0, 1, 5] {
            let mut net = DriverNetwork::<f64>::chain(1, config(d, 1, WireFormat::Ideal)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            for _ in 0..20 {
                let x = random_state(&mut rng, 2);
                net.tick_full(&x).unwrap();
                assert_eq!(net.view(0), &x.stacked());
            }
        }
    }

    #[test]
    fn staged_law_is_used_from_the_next_tick() {
        let mut net = DriverNetwork::<f64>::chain(3, config(0, 1, WireFormat::Ideal)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_state(&mut rng, 6);
        for _ in 0..=10 {
            assert_eq!(net.tick_full(&x).unwrap(), DVector::zeros(6));
        }
        let law = random_law(&mut rng, 6, 1);
        net.stage_law(&law).unwrap();
        assert_eq!(net.active_sequence(0), None);
        let tau = net.tick_full(&x).unwrap();
        assert_eq!(tau, law.eval(&x).unwrap());
        assert!((0..3).all(|b| net.active_sequence(b) == Some(1)));
    }

    #[test]
    fn later_stage_wins() {
        let mut net = DriverNetwork::<f64>::chain(3, config(0, 1, WireFormat::Ideal)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_state(&mut rng, 6);
        net.tick_full(&x).unwrap();
        net.stage_law(&random_law(&mut rng, 6, 4)).unwrap();
        let second = random_law(&mut rng, 6, 5);
        net.stage_law(&second).unwrap();
        assert_eq!(net.tick_full(&x).unwrap(), second.eval(&x).unwrap());
        assert_eq!(net.active_sequence(2), Some(5));
    }

    #[test]
    fn boards_hold_only_their_rows() {
        let boards = vec![
            BoardConfig {
                board_id: 7,
                joints: [4, 5],
                ring_position: 0,
            },
            BoardConfig {
                board_id: 8,
                joints: [2, 3],
                ring_position: 2,
            },
            BoardConfig {
                board_id: 9,
                joints: [0, 1],
                ring_position: 1,
            },
        ];
        let mut net = DriverNetwork::<f64>::new(boards, config(0, 1, WireFormat::Ideal)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let law = random_law(&mut rng, 6, 1);
        net.stage_law(&law).unwrap();
        let x = random_state(&mut rng, 6);
        let tau = net.tick_full(&x).unwrap();
        let rows = net.active_rows(1).unwrap();
        assert_eq!(rows.a, law.a().rows(2, 2).into_owned());
        assert_eq!(rows.b, law.b().rows(2, 2).into_owned());
        assert_eq!(tau, law.eval(&x).unwrap());
    }

    #[test]
    fn law_latency_delays_commit() {
        let mut cfg = config(0, 1, WireFormat::Ideal);
        cfg.law_latency = 3;
        let mut net = DriverNetwork::<f64>::chain(3, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_state(&mut rng, 6);
        net.stage_law(&random_law(&mut rng, 6, 1)).unwrap();
        for _ in 0..3 {
            net.tick_full(&x).unwrap();
            assert_eq!(net.active_sequence(0), None);
        }
        net.tick_full(&x).unwrap();
        assert_eq!(net.active_sequence(0), Some(1));
    }

    #[test]
    fn decimation_holds_between_recomputes() {
        let mut net = DriverNetwork::<f64>::chain(3, config(0, 4, WireFormat::Ideal)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let law = random_law(&mut rng, 6, 1);
        net.stage_law(&law).unwrap();
        let mut held = DVector::zeros(6);
        for tick in 0..20u64 {
            let x = random_state(&mut rng, 6);
            let tau = net.tick_full(&x).unwrap();
            if tick % 4 == 0 {
                held = law.eval(&x).unwrap();
            }
            assert_eq!(tau, held, "tick {tick}");
        }
    }

    #[test]
    fn configuration_errors() {
        let dup = vec![
            BoardConfig {
                board_id: 0,
                joints: [0, 1],
                ring_position: 0,
            },
            BoardConfig {
                board_id: 1,
                joints: [1, 2],
                ring_position: 1,
            },
        ];
        assert!(matches!(
            DriverNetwork::<f64>::new(dup, NetworkConfig::default()),
            Err(NetworkError::SharedJoint(1))
        ));
        let ring = vec![
            BoardConfig {
                board_id: 0,
                joints: [0, 1],
                ring_position: 1,
            },
            BoardConfig {
                board_id: 1,
                joints: [2, 3],
                ring_position: 1,
            },
        ];
        assert!(matches!(
            DriverNetwork::<f64>::new(ring, NetworkConfig::default()),
            Err(NetworkError::RingPositions(2))
        ));
        assert!(matches!(
            DriverNetwork::<f64>::chain(3, config(0, 0, WireFormat::Ideal)),
            Err(NetworkError::Decimation)
        ));
        let mut net = DriverNetwork::<f64>::chain(3, NetworkConfig::default()).unwrap();
        let x = JointState::zeros(6);
        let mut locals = net.split_state(&x);
        locals.pop();
        assert_eq!(net.tick(&locals), Err(NetworkError::MissingContribution(2)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(net.stage_law(&random_law(&mut rng, 4, 0)).is_err());
    }

    #[test]
    fn dropped_packets_only_age_views() {
        let mut cfg = config(0, 1, WireFormat::Float32);
        cfg.drop_probability = 0.3;
        cfg.seed = 9;
        let run = || {
            let mut net = DriverNetwork::<f64>::chain(3, cfg.clone()).unwrap();
            (0..200u64)
                .map(|t| {
                    net.tick_full(&ramp(t, 6)).unwrap();
                    net.slice_ages(0)
                })
                .collect::<Vec<_>>()
        };
        let ages = run();
        assert_eq!(ages, run());
        assert!(ages.iter().flatten().any(|&a| a > 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn distributed_equals_centralized(seed in any::<u64>(), decimation in 1usize..9, float32 in any::<bool>()) {
            let wire = if float32 { WireFormat::Float32 } else { WireFormat::Ideal };
            let mut net = DriverNetwork::<f64>::chain(3, config(0, decimation, wire)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut active: Option<LinearFeedbackLaw<f64>> = None;
            let mut held = DVector::zeros(6);
            for tick in 0..200u64 {
                if rng.random_bool(0.1) {
                    let law = random_law(&mut rng, 6, tick as u32);
                    net.stage_law(&law).unwrap();
                    let q = |m: &DMatrix<f64>| m.map(|v| wire.quantize(v));
                    active = Some(LinearFeedbackLaw::new(
                        q(law.a()), wire.quantize_vec(law.b()), JointState::zeros(6), 0.0, law.sequence()
                    ).unwrap());
                }
                let x = random_state(&mut rng, 6);
                let tau = net.tick_full(&x).unwrap();
                if tick % decimation as u64 == 0 {
                    held = match &active {
                        Some(l) => affine_apply(l.a(), &wire.quantize_vec(&x.stacked()), l.b()),
                        None => DVector::zeros(6),
                    };
                }
                prop_assert_eq!(&tau, &held);
                let seqs: Vec<_> = (0..3).map(|b| net.active_sequence(b)).collect();
                prop_assert!(seqs.iter().all(|s| *s == seqs[0]));
            }
        }

        #[test]
        fn staleness_is_bounded(m in 1usize..6, d in 0usize..5, ticks in 1u64..60) {
            let mut net = DriverNetwork::<f64>::chain(m, config(d, 1, WireFormat::Float32)).unwrap();
            for t in 0..ticks {
                net.tick_full(&ramp(t, 2 * m)).unwrap();
                for b in 0..m {
                    prop_assert!(net.slice_ages(b).iter().all(|&a| a <= ((m - 1) * d) as u64));
                }
            }
        }
    }
}
