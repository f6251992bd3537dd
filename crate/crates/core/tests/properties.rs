use proptest::prelude::*;

use curricomp::augment::{basic_augment, cutmix, mixup, BasicAugmentConfig, MixMode};
use curricomp::curriculum::{
    compound_count, plan, synthesize_compound, BasicPool, CompoundMethod, CurriculumSchedule, SynthesisConfig,
};
use curricomp::data::dataset::{filter_neutral, parse_manifest, split, write_manifest, ManifestRow};
use curricomp::data::synthetic::{generate_synthetic, SyntheticConfig};
use curricomp::data::{BasicClass, CompoundCatalog, LabelVector, Sample};
use curricomp::eval::{constrain_to_compound, Metrics};
use curricomp::loss::{bce_loss, bce_with_logits, sigmoid};
use curricomp::nn::{backward, forward, Checkpoint, ModelSpec, ModelState, Optimizer, OptimizerConfig, Tensor};
use curricomp::rng::RngStream;

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    use rand::Rng;
    let mut rng = RngStream::new(seed).rng();
    Tensor::new(vec![h, w, 3], (0..h * w * 3).map(|_| rng.random()).collect()).unwrap()
}

fn class(i: usize) -> BasicClass {
    BasicClass::ALL[i % 6]
}

fn tiny_model(seed: u64) -> (ModelSpec, ModelState) {
    let spec = ModelSpec::mlp([4, 4, 3], &[8]).unwrap();
    let state = ModelState::init(&spec, seed);
    (spec, state)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixup_is_linear(h in 1usize..10, w in 1usize..10, lambda in 0.0f64..=1.0, seed: u64, ca in 0usize..6, cb in 0usize..6) {
        let a = Sample::basic(image(h, w, seed), class(ca));
        let b = Sample::basic(image(h, w, seed ^ 1), class(cb));
        let m = mixup(&a, &b, lambda, MixMode::Proportional).unwrap();
        for ((&o, &x), &y) in m.image.data().iter().zip(a.image.data()).zip(b.image.data()) {
            prop_assert!((o - (lambda * x + (1.0 - lambda) * y)).abs() <= 1e-12);
        }
        for (i, v) in m.label.values().iter().enumerate() {
            let want = lambda * a.label.0[i] + (1.0 - lambda) * b.label.0[i];
            prop_assert!((v - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn cutmix_conserves_pixels(h in 1usize..20, w in 1usize..20, lambda in 0.0f64..=1.0, seed: u64) {
        let a = Sample::basic(image(h, w, seed), BasicClass::Happiness);
        let b = Sample::basic(image(h, w, seed ^ 7), BasicClass::Surprise);
        let out = cutmix(&a, &b, lambda, &mut RngStream::new(seed).rng(), MixMode::Proportional).unwrap();
        prop_assert_eq!(out.sample.image.shape(), a.image.shape());
        for y in 0..h {
            for x in 0..w {
                let src = if out.patch.contains(y, x) { &b.image } else { &a.image };
                let i = (y * w + x) * 3;
                prop_assert_eq!(&out.sample.image.data()[i..i + 3], &src.data()[i..i + 3]);
            }
        }
        prop_assert_eq!(out.lambda_hat, 1.0 - out.patch.area() as f64 / (h * w) as f64);
        prop_assert_eq!(out.sample.label.get(BasicClass::Happiness), out.lambda_hat);
    }

    #[test]
    fn basic_augment_keeps_shape_and_range(h in 2usize..24, w in 2usize..24, seed: u64) {
        let s = Sample::basic(image(h, w, seed), BasicClass::Fear);
        let out = basic_augment(&s, &mut RngStream::new(seed).rng(), &BasicAugmentConfig::default()).unwrap();
        prop_assert_eq!(out.image.shape(), s.image.shape());
        prop_assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(out.label, s.label);
    }

    #[test]
    fn constrained_prediction_is_affine_invariant(
        grid in proptest::collection::vec(0u32..=64, 6),
        scale in prop::sample::select(vec![0.25, 0.5, 1.0, 2.0, 4.0]),
        shift in -8i32..=8,
    ) {
        // Dyadic values keep every sum exact, so ties survive the transform.
        let cat = CompoundCatalog::standard();
        let p: Vec<f64> = grid.iter().map(|&k| k as f64 / 64.0).collect();
        let q: Vec<f64> = p.iter().map(|v| scale * v + shift as f64 / 8.0).collect();
        let (k, _) = constrain_to_compound(&p, &cat);
        prop_assert!(k < cat.len());
        prop_assert_eq!(k, constrain_to_compound(&q, &cat).0);
    }

    #[test]
    fn macro_f1_is_the_mean_of_class_scores(pairs in proptest::collection::vec((0usize..7, 0usize..7), 1..200)) {
        let cat = CompoundCatalog::standard();
        let (targets, preds): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = Metrics::from_predictions(&targets, &preds, &cat).unwrap();
        let mean = m.per_class_f1().iter().sum::<f64>() / 7.0;
        prop_assert!((m.macro_f1 - mean).abs() <= 1e-12);
        for (k, row) in m.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), m.per_class[k].support);
        }
        prop_assert_eq!(m.per_class.iter().map(|c| c.support).sum::<usize>(), targets.len());
    }

    #[test]
    fn plan_follows_schedule(
        stages in proptest::collection::vec((1usize..6, 0u32..=10), 1..5),
        batch_size in 1usize..300,
    ) {
        let epochs: Vec<usize> = stages.iter().map(|s| s.0).collect();
        let props: Vec<f64> = stages.iter().map(|s| s.1 as f64 / 10.0).collect();
        let sched = CurriculumSchedule::from_arrays(&epochs, &props).unwrap();
        let p = plan(&sched);
        prop_assert_eq!(p.len(), epochs.iter().sum::<usize>());
        for (i, e) in p.iter().enumerate() {
            prop_assert_eq!(e.epoch, i + 1);
            prop_assert_eq!(e.compound_proportion, props[e.stage - 1]);
            let n = compound_count(e.compound_proportion, batch_size);
            prop_assert_eq!(n, (e.compound_proportion * batch_size as f64).round() as usize);
            prop_assert!(n <= batch_size);
        }
    }

    #[test]
    fn nondecreasing_schedule_gives_nondecreasing_exposure(mut props in proptest::collection::vec(0u32..=10, 1..5)) {
        props.sort_unstable();
        let props: Vec<f64> = props.iter().map(|&k| k as f64 / 10.0).collect();
        let sched = CurriculumSchedule::from_arrays(&vec![2; props.len()], &props).unwrap();
        let p = plan(&sched);
        prop_assert!(p.windows(2).all(|w| w[0].compound_proportion <= w[1].compound_proportion));
    }

    #[test]
    fn bce_is_nonnegative_and_logit_form_agrees(
        z in proptest::collection::vec(-15.0f64..15.0, 6..=30),
        y_bits in proptest::collection::vec(0.0f64..=1.0, 30),
    ) {
        let n = z.len() / 6;
        let z = &z[..n * 6];
        let y = Tensor::new(vec![n, 6], y_bits[..n * 6].to_vec()).unwrap();
        let p = Tensor::new(vec![n, 6], z.iter().map(|&v| sigmoid(v)).collect()).unwrap();
        let from_p = bce_loss(&p, &y).unwrap();
        let from_z = bce_with_logits(&Tensor::new(vec![n, 6], z.to_vec()).unwrap(), &y).unwrap();
        prop_assert!(from_p >= 0.0);
        prop_assert!((from_p - from_z).abs() <= 1e-7 * (1.0 + from_z));
    }

    #[test]
    fn forward_is_a_probability_and_row_equivariant(seed: u64, n in 1usize..8, rot in 0usize..8) {
        let (spec, state) = tiny_model(seed);
        let x = image(n * 4, 4, seed).into_data();
        let batch = Tensor::new(vec![n, 4, 4, 3], x.clone()).unwrap();
        let out = forward(&spec, &state, &batch).unwrap();
        prop_assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));

        let row = 48;
        let k = rot % n;
        let mut rotated = x[k * row..].to_vec();
        rotated.extend_from_slice(&x[..k * row]);
        let out_rot = forward(&spec, &state, &Tensor::new(vec![n, 4, 4, 3], rotated).unwrap()).unwrap();
        for i in 0..n {
            prop_assert_eq!(out_rot.row(i), out.row((i + k) % n));
        }
    }

    #[test]
    fn training_steps_are_reproducible(seed: u64, steps in 1usize..6) {
        let (spec, init) = tiny_model(seed);
        let x = Tensor::new(vec![2, 4, 4, 3], image(8, 4, seed).into_data()).unwrap();
        let y = Tensor::new(vec![2, 6], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let run = || {
            let mut state = init.clone();
            let mut opt = Optimizer::new(OptimizerConfig::default()).unwrap();
            for _ in 0..steps {
                let g = backward(&spec, &state, &x, &y).unwrap();
                opt.step(&mut state, &g).unwrap();
            }
            (state, opt)
        };
        let (a, oa) = run();
        let (b, ob) = run();
        prop_assert_eq!(a, b);
        prop_assert_eq!(oa, ob);
    }

    #[test]
    fn checkpoint_round_trips(seed: u64, epoch in 0usize..100, f1 in proptest::option::of(0.0f64..=1.0)) {
        let (spec, state) = tiny_model(seed);
        let mut ck = Checkpoint::new(spec, state);
        ck.epoch = epoch;
        ck.best_macro_f1 = f1;
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, ck);
    }

    #[test]
    fn manifest_round_trips(rows in proptest::collection::vec(
        (proptest::collection::vec(0.0f64..=1.0, 6), prop::bool::ANY), 0..20,
    )) {
        let rows: Vec<ManifestRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (v, neutral))| ManifestRow {
                path: format!("img_{i}.png"),
                label: LabelVector(v.try_into().unwrap()),
                neutral: if neutral { 1.0 } else { 0.0 },
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_manifest(&path, &rows).unwrap();
        let back = parse_manifest(&std::fs::read_to_string(&path).unwrap()).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn split_is_a_partition(classes in proptest::collection::vec(0usize..6, 1..120), frac in 0.05f64..0.95, seed: u64) {
        let samples: Vec<Sample> = classes.iter().map(|&c| Sample::basic(Tensor::zeros(vec![1, 1, 3]), class(c))).collect();
        let s = split(&samples, frac, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..samples.len()).collect::<Vec<_>>());
        prop_assert_eq!(s.clone(), split(&samples, frac, seed).unwrap());
    }

    #[test]
    fn filter_neutral_is_idempotent(neutral in proptest::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), 0..30)) {
        let samples: Vec<Sample> = neutral
            .iter()
            .map(|&n| Sample { neutral: n, ..Sample::basic(Tensor::zeros(vec![1, 1, 3]), BasicClass::Anger) })
            .collect();
        let once = filter_neutral(samples);
        prop_assert!(once.iter().all(|s| s.neutral == 0.0));
        prop_assert_eq!(filter_neutral(once.clone()), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthesized_labels_name_exactly_one_entry(seed: u64, cutmix_method: bool) {
        let basic = generate_synthetic(&SyntheticConfig { n_per_class: 3, resolution: 16, seed, ..SyntheticConfig::default() }).unwrap();
        let pool = BasicPool::new(&basic);
        let cat = CompoundCatalog::standard();
        let method = if cutmix_method { CompoundMethod::Cutmix } else { CompoundMethod::Mixup };
        let mut rng = RngStream::new(seed).rng();
        for _ in 0..20 {
            let s = synthesize_compound(&pool, &cat, method, &SynthesisConfig::default(), &mut rng).unwrap();
            let support = s.label.support();
            let matches = cat.entries().iter().filter(|e| support.len() == 2 && support.iter().all(|&c| e.contains(c))).count();
            prop_assert_eq!(matches, 1);
        }
    }
}

#[test]
fn surprise_appears_in_five_entries() {
    let cat = CompoundCatalog::standard();
    assert_eq!(cat.len(), 7);
    assert_eq!(cat.entries().iter().filter(|e| e.contains(BasicClass::Surprise)).count(), 5);
}
