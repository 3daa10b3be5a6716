use hopper_core::sampling::{mutate, sample, Rng, Temperature};
use hopper_core::space::{contains, ChoiceSpec, FloatSpec, IntSpec, ParamSpec, Value};
use proptest::prelude::*;
use rand::Rng as _;

const DRAWS: usize = 100_000;

/// One row per datatype option. The log row with `precision=1` is expressed
/// with significant digits.
fn reference_rows() -> Vec<(&'static str, ParamSpec)> {
    vec![
        ("int(100,500)", IntSpec::new(100, 500).into()),
        (
            "int(100,500,multiple_of=100)",
            IntSpec::new(100, 500).multiple_of(100).into(),
        ),
        ("int(0,10,shape=3)", IntSpec::new(0, 10).shape([3]).into()),
        ("int(2,64,power_of=2)", IntSpec::new(2, 64).power_of(2).into()),
        ("float(0,1)", FloatSpec::new(0.0, 1.0).into()),
        ("float(0,1,precision=1)", FloatSpec::new(0.0, 1.0).precision(1).into()),
        (
            "float(0,1,\"0.1f\")",
            FloatSpec::with_format(0.0, 1.0, "0.1f").unwrap().into(),
        ),
        ("float(-10,10,shape=2)", FloatSpec::new(-10.0, 10.0).shape([2]).into()),
        ("float(1e-5,1e-3,log)", FloatSpec::new(1e-5, 1e-3).log().into()),
        (
            "float(1e-5,1e-3,log,1 digit)",
            FloatSpec::new(1e-5, 1e-3).log().significant_digits(1).into(),
        ),
        (
            "float(1e-5,1e-3,\"0.1g\")",
            FloatSpec::with_format(1e-5, 1e-3, "0.1g").unwrap().into(),
        ),
        (
            "choice(adam,sgd,rmsprop)",
            ChoiceSpec::new(["adam", "sgd", "rmsprop"]).into(),
        ),
        (
            "choice([1,10,100],ordinal)",
            ChoiceSpec::new([1, 10, 100]).ordinal().into(),
        ),
    ]
}

/// Counts samples and chained mutations (random τ each step) that fall outside the domain.
fn violations(spec: &ParamSpec, seed: u64) -> (usize, usize) {
    let mut rng = Rng::new(seed);
    let mut bad_samples = 0;
    let mut current = sample(spec, &mut rng);
    for _ in 0..DRAWS {
        if !contains(spec, &sample(spec, &mut rng)) {
            bad_samples += 1;
        }
    }
    let mut bad_mutations = 0;
    for _ in 0..DRAWS {
        let tau = Temperature::new(rng.random::<f64>());
        current = mutate(spec, &current, tau, &mut rng);
        if !contains(spec, &current) {
            bad_mutations += 1;
        }
    }
    (bad_samples, bad_mutations)
}

#[test]
fn every_reference_row_stays_in_domain() {
    for (i, (name, spec)) in reference_rows().into_iter().enumerate() {
        assert!(spec.violations().is_empty(), "{name}");
        let (s, m) = violations(&spec, 1000 + i as u64);
        assert_eq!((s, m), (0, 0), "{name}: {s} bad samples, {m} bad mutations");
    }
}

#[test]
fn reference_samples_look_like_the_table() {
    let mut rng = Rng::new(5);
    let power = ParamSpec::from(IntSpec::new(2, 64).power_of(2));
    for _ in 0..1000 {
        let Value::Int(v) = sample(&power, &mut rng) else {
            panic!()
        };
        assert!([2, 4, 8, 16, 32, 64].contains(&v));
    }
    let sig = ParamSpec::from(FloatSpec::with_format(1e-5, 1e-3, "0.1g").unwrap());
    for _ in 0..1000 {
        let Value::Float(v) = sample(&sig, &mut rng) else {
            panic!()
        };
        let text = format!("{v:e}");
        assert!(!text.split('e').next().unwrap().contains('.'), "{text}");
    }
    assert!(contains(&sig, &Value::Float(2e-4)));
    assert!(contains(&sig, &Value::Float(5e-5)));
    assert!(contains(&sig, &Value::Float(8e-4)));
    let dec = ParamSpec::from(FloatSpec::new(0.0, 1.0).precision(1));
    for v in [0.5, 1.0, 0.3] {
        assert!(contains(&dec, &Value::Float(v)));
    }
}

fn arb_int_spec() -> impl Strategy<Value = IntSpec> {
    (-1000i64..1000, 0i64..2000, 0u8..3, 1i64..50, 2i64..5).prop_map(|(low, width, kind, step, base)| {
        let spec = IntSpec::new(low, low + width);
        match kind {
            0 => spec,
            1 => spec.multiple_of(step),
            _ => IntSpec::new(low.abs().max(1), low.abs().max(1) + width).power_of(base),
        }
    })
}

fn arb_float_spec() -> impl Strategy<Value = FloatSpec> {
    (-1e3f64..1e3, 1e-6f64..1e3, 0u8..4, 0u32..4, 1u32..4).prop_map(|(low, width, kind, digits, sig)| match kind {
        0 => FloatSpec::new(low, low + width),
        1 => FloatSpec::new(low, low + width).precision(digits),
        2 => FloatSpec::new(low.abs() + 1e-6, low.abs() + 1e-6 + width).log(),
        _ => FloatSpec::new(low.abs() + 1e-6, low.abs() + 1e-6 + width)
            .log()
            .significant_digits(sig),
    })
}

fn arb_spec() -> impl Strategy<Value = ParamSpec> {
    prop_oneof![
        arb_int_spec().prop_map(ParamSpec::from),
        arb_float_spec().prop_map(ParamSpec::from),
        (1usize..8, any::<bool>()).prop_map(|(n, ordinal)| {
            let spec = ChoiceSpec::new(0..n as i64);
            ParamSpec::from(if ordinal { spec.ordinal() } else { spec })
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn random_specs_keep_samples_and_mutations_in_domain(
        spec in arb_spec(),
        seed in any::<u64>(),
        taus in prop::collection::vec(0.0f64..=1.0, 50),
    ) {
        prop_assume!(spec.violations().is_empty());
        let mut rng = Rng::new(seed);
        let mut v = sample(&spec, &mut rng);
        prop_assert!(contains(&spec, &v), "sample {:?}", v);
        for tau in taus {
            v = mutate(&spec, &v, Temperature::new(tau), &mut rng);
            prop_assert!(contains(&spec, &v), "mutation {:?} at tau {}", v, tau);
        }
    }

    #[test]
    fn quantize_is_idempotent(spec in arb_spec(), seed in any::<u64>()) {
        prop_assume!(spec.violations().is_empty());
        let mut rng = Rng::new(seed);
        let v = sample(&spec, &mut rng);
        prop_assert_eq!(spec.quantize(&v), v);
    }
}
