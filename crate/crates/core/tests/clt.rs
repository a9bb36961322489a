use proptest::prelude::*;

use rjdcov::clt::{center_order3_explicit, center_tensor, random_centered_tensor, simulate_combinatorial_sums, Tensor};
use rjdcov::stats::{mean, std_dev};

fn tensor(order: usize, n: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-3.0f64..3.0, n.pow(order as u32)).prop_map(move |d| Tensor::new(order, n, d).unwrap())
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=4, 2usize..=5)
}

fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
    a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn centring_is_idempotent(t in shape().prop_flat_map(|(r, n)| tensor(r, n))) {
        let once = center_tensor(&t);
        prop_assert!(once.tensor().max_slice_sum() < 1e-9);
        prop_assert!(close(center_tensor(once.tensor()).tensor(), once.tensor(), 1e-12));
    }

    #[test]
    fn centring_is_linear(
        (s, t) in shape().prop_flat_map(|(r, n)| (tensor(r, n), tensor(r, n))),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let combo = Tensor::new(
            s.order(),
            s.n(),
            s.data().iter().zip(t.data()).map(|(x, y)| alpha * x + beta * y).collect(),
        ).unwrap();
        let (cs, ct) = (center_tensor(&s), center_tensor(&t));
        let want = Tensor::new(
            s.order(),
            s.n(),
            cs.tensor().data().iter().zip(ct.tensor().data()).map(|(x, y)| alpha * x + beta * y).collect(),
        ).unwrap();
        prop_assert!(close(center_tensor(&combo).tensor(), &want, 1e-12));
    }

    #[test]
    fn explicit_order_three_formula(t in (2usize..=5).prop_flat_map(|n| tensor(3, n))) {
        prop_assert!(close(&center_order3_explicit(&t).unwrap(), center_tensor(&t).tensor(), 1e-12));
    }

    #[test]
    fn mean_zero_rank_one_tensor_is_fixed(
        vecs in (2usize..=6).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-2.0f64..2.0, n), 3))
    ) {
        let n = vecs[0].len();
        let centred: Vec<Vec<f64>> = vecs.iter().map(|v| {
            let m = mean(v);
            v.iter().map(|x| x - m).collect()
        }).collect();
        let t = Tensor::from_fn(3, n, |i| centred[0][i[0]] * centred[1][i[1]] * centred[2][i[2]]).unwrap();
        prop_assert!(close(center_tensor(&t).tensor(), &t, 1e-12));
    }

    #[test]
    fn constant_tensor_vanishes((r, n) in shape(), v in -5.0f64..5.0) {
        let t = Tensor::new(r, n, vec![v; n.pow(r as u32)]).unwrap();
        prop_assert!(center_tensor(&t).tensor().max_abs() < 1e-12);
    }
}

#[test]
fn combinatorial_sum_has_mean_zero() {
    let t = random_centered_tensor(3, 25, 4).unwrap();
    let draws = simulate_combinatorial_sums(&t, 5000, 4);
    let se = std_dev(&draws) / (draws.len() as f64).sqrt();
    assert!(mean(&draws).abs() <= 4.0 * se, "mean {} se {se}", mean(&draws));
}
