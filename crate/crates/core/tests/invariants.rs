use manic_core::approximator::Gradients;
use manic_core::bootstrap::{collect_held_walk, collect_random_walk};
use manic_core::contentment::{discount_weights, expand_pairs};
use manic_core::env::{Crane, Environment, NoiseConfig, Warehouse, WarehouseMap};
use manic_core::learning::{SystemDims, Topology};
use manic_core::planner::PlanPool;
use manic_core::{ActionSpace, ActionVector, Approximator, BeliefVector, ContentmentModel, FrameDims, LearningSystem};
use proptest::prelude::*;

fn topology() -> impl Strategy<Value = Vec<usize>> {
    (1usize..6, prop::collection::vec(1usize..8, 0..3), 1usize..4).prop_map(|(i, mut h, o)| {
        h.insert(0, i);
        h.push(o);
        h
    })
}

fn small_system(seed: u64) -> LearningSystem {
    let dims = SystemDims {
        belief_dims: 2,
        action_dims: 4,
        frame: FrameDims::new(6, 5, 3),
        aux_dims: 0,
    };
    let topo = Topology {
        transition_hidden: vec![5],
        decoder_hidden: vec![6],
        encoder_hidden: Some(vec![3]),
    };
    LearningSystem::new(dims, &topo, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn model_bytes_round_trip(sizes in topology(), seed in any::<u64>()) {
        let net = Approximator::new(&sizes, seed).unwrap();
        let back = Approximator::from_bytes(&net.to_bytes()).unwrap();
        prop_assert_eq!(back.layer_sizes(), net.layer_sizes());
        prop_assert_eq!(back.params(), net.params());
        prop_assert_eq!(back.hash(), net.hash());
        let json = Approximator::from_json(&net.to_json().unwrap()).unwrap();
        prop_assert_eq!(json, net);
    }

    #[test]
    fn train_step_is_one_gradient_step(sizes in topology(), seed in any::<u64>(), rate in 0.001f64..0.5) {
        let net = Approximator::new(&sizes, seed).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|i| ((i as f64 + 1.0) * 0.37).sin()).collect();
        let t: Vec<f64> = (0..*sizes.last().unwrap()).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut fused = net.clone();
        let loss = fused.train_step(&x, &t, rate).unwrap();
        let (expected, grads) = net.loss_gradients(&x, &t).unwrap();
        let mut explicit = net.clone();
        explicit.apply_gradients(&grads, rate).unwrap();
        prop_assert_eq!(loss.to_bits(), expected.to_bits());
        prop_assert_eq!(fused, explicit);
    }

    #[test]
    fn beliefs_are_clamped(values in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let v = BeliefVector::new(values.clone()).unwrap();
        prop_assert!(v.as_slice().iter().all(|b| (-1.0..=1.0).contains(b)));
        for (b, raw) in v.as_slice().iter().zip(&values) {
            if raw.abs() <= 1.0 {
                prop_assert_eq!(b, raw);
            }
        }
    }

    #[test]
    fn rollouts_stay_in_belief_range(seed in any::<u64>(), plan in prop::collection::vec(0usize..4, 1..15)) {
        let ls = small_system(seed);
        let plan: Vec<ActionVector> = plan.into_iter().map(|a| ActionVector::one_hot(4, a)).collect();
        let trace = ls.rollout(&BeliefVector::zeros(2), &plan).unwrap();
        prop_assert_eq!(trace.len(), plan.len());
        prop_assert!(trace.iter().flat_map(|v| v.as_slice()).all(|b| (-1.0..=1.0).contains(b)));
    }

    #[test]
    fn decoded_pixels_are_valid_intensities(seed in any::<u64>(), v in prop::collection::vec(-1.0f64..=1.0, 2)) {
        let ls = small_system(seed);
        let frame = ls.decode_frame(&BeliefVector::new(v).unwrap()).unwrap();
        prop_assert_eq!(frame.pixels.len(), 6 * 5 * 3);
        prop_assert!(frame.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn discount_weights_are_normalized(n in 1usize..60) {
        let w = discount_weights(n);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.windows(2).all(|p| p[0] > p[1]));
    }

    #[test]
    fn constant_contentment_gives_constant_utility(c in -3.0f64..3.0, len in 1usize..20) {
        let mut h = Approximator::zeros(&[2, 1]).unwrap();
        h.biases_mut(0)[0] = c;
        let cm = ContentmentModel::from_approximator(h).unwrap();
        let trace = vec![BeliefVector::new(vec![0.3, -0.2]).unwrap(); len];
        prop_assert!((cm.plan_utility(&trace).unwrap() - c).abs() < 1e-12);
    }

    #[test]
    fn orderings_expand_to_all_pairs(n in 2usize..9) {
        let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let pairs = expand_pairs(&ids);
        prop_assert_eq!(pairs.len(), n * (n - 1) / 2);
        for (w, l) in &pairs {
            let (wi, li) = (ids.iter().position(|x| x == w).unwrap(), ids.iter().position(|x| x == l).unwrap());
            prop_assert!(wi < li);
        }
    }

    #[test]
    fn pair_loss_pushes_winner_up(seed in any::<u64>()) {
        let mut cm = ContentmentModel::new(2, &[4], seed).unwrap();
        let w = vec![BeliefVector::new(vec![0.5, 0.1]).unwrap()];
        let l = vec![BeliefVector::new(vec![-0.4, 0.2]).unwrap()];
        let (before, grads): (f64, Gradients) = cm.pair_loss(&w, &l).unwrap();
        cm.h.apply_gradients(&grads, 1e-3).unwrap();
        let (after, _) = cm.pair_loss(&w, &l).unwrap();
        prop_assert!(after <= before + 1e-15);
    }

    #[test]
    fn elite_never_regresses(seed in any::<u64>(), iterations in 1usize..8) {
        let ls = small_system(seed);
        let cm = ContentmentModel::new(2, &[3], seed ^ 1).unwrap();
        let v0 = BeliefVector::zeros(2);
        let mut pool = PlanPool::init(12, 6, &ActionSpace::Discrete { n: 4 }, seed).unwrap();
        pool.evaluate(&ls, &cm, &v0).unwrap();
        let mut last = pool.elite().unwrap().1;
        for _ in 0..iterations {
            pool.refine(&ls, &cm, &v0, 1).unwrap();
            let now = pool.elite().unwrap().1;
            prop_assert!(now >= last);
            last = now;
        }
        prop_assert_eq!(pool.len(), 12);
    }

    #[test]
    fn crane_states_stay_legal(seed in any::<u64>(), actions in prop::collection::vec(0usize..4, 1..200)) {
        let mut crane = Crane::new(NoiseConfig { transition: 0.05, observation: 0.0 });
        crane.reset(seed);
        for a in actions {
            let s = crane.step(&ActionVector::one_hot(4, a)).unwrap();
            prop_assert!(s.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn warehouse_never_enters_shelves(map_seed in 0u64..50, seed in any::<u64>(), actions in prop::collection::vec(0usize..4, 1..200)) {
        let map = WarehouseMap::generated(map_seed);
        let mut wh = Warehouse::new(map.clone(), NoiseConfig { transition: 0.02, observation: 0.0 });
        wh.reset(seed);
        for a in actions {
            let s = wh.step(&ActionVector::one_hot(4, a)).unwrap();
            prop_assert!(map.is_free(s[0], s[1]));
        }
    }

    #[test]
    fn held_walks_repeat_actions(hold in 1usize..12, seed in any::<u64>()) {
        let mut env = Crane::new(NoiseConfig::default());
        let ds = collect_held_walk(&mut env, 60, seed, hold).unwrap();
        prop_assert_eq!(ds.actions.len(), 59);
        for block in ds.actions.chunks(hold) {
            prop_assert!(block.iter().all(|a| a == &block[0]));
        }
    }
}

#[test]
fn hold_of_one_is_the_plain_walk() {
    let mut a = Crane::new(NoiseConfig::default());
    let mut b = Crane::new(NoiseConfig::default());
    let plain = collect_random_walk(&mut a, 80, 9).unwrap();
    let held = collect_held_walk(&mut b, 80, 9, 1).unwrap();
    assert_eq!(plain.to_bytes(), held.to_bytes());
    assert!(collect_held_walk(&mut b, 80, 9, 0).is_err());
}
