//! Property tests over the public API.

use proptest::prelude::*;
use wdro::attacks::{attack, AttackKind, AttackSpec};
use wdro::federated::{partition, BroadcastMsg, GradientMsg, ParamsMsg, PartitionMode};
use wdro::models::{Activation, Datum, ModelParams, ModelSpec};
use wdro::prox::{prox_step, RegularizerSpec};
use wdro::robust::{inner_max_oracle, psi, transport_cost, AugmentedParams, GradientPair, RobustConfig};
use wdro::tensor::DenseVector;

fn unit_box(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..=1.0, d)
}

fn dv(v: Vec<f64>) -> DenseVector {
    DenseVector::new(v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transport_cost_is_a_squared_metric(a in unit_box(5), b in unit_box(5), c in unit_box(5)) {
        let (a, b, c) = (dv(a), dv(b), dv(c));
        let ab = transport_cost(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(transport_cost(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - transport_cost(&b, &a).unwrap()).abs() < 1e-12);
        let (ac, cb) = (transport_cost(&a, &c).unwrap(), transport_cost(&c, &b).unwrap());
        prop_assert!(ab.sqrt() <= ac.sqrt() + cb.sqrt() + 1e-12);
    }

    #[test]
    fn prox_output_is_feasible_and_reduces_the_regularizer(
        v in prop::collection::vec(-5.0f64..5.0, 6),
        gamma in -3.0f64..10.0,
        alpha in 0.01f64..2.0,
        w in 0.0f64..2.0,
    ) {
        let mut full = v.clone();
        full.push(gamma);
        for reg in [RegularizerSpec::l1(w), RegularizerSpec::l2sq(w), RegularizerSpec::none()] {
            let out = prox_step(&reg, &dv(full.clone()), alpha, 1.5).unwrap();
            prop_assert!(out.gamma >= 1.5);
            prop_assert!(reg.value(out.theta.as_slice()) <= reg.value(&v) + 1e-12);
        }
    }

    #[test]
    fn oracle_never_loses_to_the_starting_point(
        x in unit_box(3),
        theta in prop::collection::vec(-1.0f64..1.0, 8),
        gamma in 2.0f64..5.0,
        label in 0usize..2,
    ) {
        let spec = ModelSpec::logistic(3, 2);
        let z = Datum::class(x, label).unwrap();
        let aug = AugmentedParams::new(ModelParams::from_vec(theta).unwrap(), gamma);
        let cfg = RobustConfig { rho: 1.0, gamma0: 1.0, oracle_step: Some(0.1), oracle_eps: 1e-8, oracle_max_iters: 5000, ..RobustConfig::default() };
        let p = inner_max_oracle(&spec, &aug, &z, &cfg).unwrap();
        let start = psi(&spec, &aug, &z.x, &z, &cfg).unwrap();
        prop_assert!(p.psi_value >= start - 1e-12);
        prop_assert!(p.certificate <= 1e-8);
    }

    #[test]
    fn norm_bounded_attacks_respect_budget_and_box(
        x in unit_box(4),
        theta in prop::collection::vec(-2.0f64..2.0, 3 * 4 + 3 + 3 * 2 + 2),
        eps in 0.0f64..0.6,
        steps in 1usize..8,
        kind in 0usize..3,
        label in 0usize..2,
    ) {
        let spec = ModelSpec::mlp(4, vec![3], 2, Activation::Softplus);
        let theta = ModelParams::from_vec(theta).unwrap();
        let z = Datum::class(x, label).unwrap();
        let kind = [AttackKind::Fgsm, AttackKind::Ifgsm, AttackKind::Pgd][kind];
        let adv = attack(&spec, &theta, &z, &AttackSpec::new(kind, eps).with_steps(steps)).unwrap();
        prop_assert_eq!(adv.y, z.y);
        for (a, b) in adv.x.iter().zip(z.x.iter()) {
            prop_assert!((a - b).abs() <= eps + 1e-12);
            prop_assert!((-1.0..=1.0).contains(a));
        }
    }

    #[test]
    fn iid_partition_is_a_balanced_cover(n in 10usize..200, k in 1usize..10, seed in any::<u64>()) {
        let data: Vec<Datum> = (0..n).map(|i| Datum::class(vec![i as f64 / n as f64], i % 3).unwrap()).collect();
        let shards = partition(&data, k, PartitionMode::Iid, seed).unwrap();
        prop_assert_eq!(shards.len(), k);
        let sizes: Vec<usize> = shards.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen: Vec<f64> = shards.iter().flatten().map(|z| z.x.as_slice()[0]).collect();
        seen.sort_by(f64::total_cmp);
        let all: Vec<f64> = data.iter().map(|z| z.x.as_slice()[0]).collect();
        prop_assert_eq!(seen, all);
    }

    #[test]
    fn messages_round_trip(
        theta in prop::collection::vec(-1e3f64..1e3, 1..20),
        gamma in 0.1f64..100.0,
        round in any::<u64>(),
        worker in 0u64..1000,
    ) {
        let b = BroadcastMsg { round, aug: AugmentedParams::new(ModelParams::from_vec(theta.clone()).unwrap(), gamma) };
        prop_assert_eq!(BroadcastMsg::from_bytes(&b.to_bytes()).unwrap(), b);
        let g = GradientMsg {
            round,
            worker_id: worker,
            grad: GradientPair { d_theta: dv(theta.clone()), d_gamma: -gamma },
            batch_size_used: 7,
        };
        prop_assert_eq!(GradientMsg::from_bytes(&g.to_bytes()).unwrap(), g.clone());
        let mut bytes = g.to_bytes();
        bytes.pop();
        prop_assert!(GradientMsg::from_bytes(&bytes).is_err());
        let p = ParamsMsg { round, worker_id: worker, theta: ModelParams::from_vec(theta).unwrap(), samples: 3 };
        prop_assert_eq!(ParamsMsg::from_bytes(&p.to_bytes()).unwrap(), p);
    }
}
