//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
//! Runs without the libtest harness so the lines are always printed.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use crossview::attention::{bidirectional_fuse, CrossTransformer, CrossTransformerConfig, RoISet, ViewInput};
use crossview::autograd::{check_gradients, Bindings, GradCheckReport, Tape, Tensor, Var};
use crossview::detector::{diou_loss_tape, focal_loss_tape, Detector, DetectorConfig, Label};
use crossview::experiment::{evaluate, fit, Seeds, TrainConfig};
use crossview::froc::{froc_curve, match_detections, nms_indices, recall_at_fppi, Detection, FrocCurve, MATCH_IOU, NMS_IOU};
use crossview::geometry::BBox;
use crossview::relevance::{registration_metrics, single_mass_studies, RegistrationReport};
use crossview::synth::{generate_dataset, mask_masses, GeneratorConfig, StudyPair, View};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_INSTANCES: u64 = 20;
const ZERO_GRAD_TOL: f64 = 1e-12;
const GRAD_BUDGET: Duration = Duration::from_secs(30);

const ROW_SUM_TOL: f64 = 1e-9;
const PERM_TOL: f64 = 1e-12;
const ATTN_INSTANCES: u64 = 50;
const ATTN_BUDGET: Duration = Duration::from_secs(10);

const ORACLE_INSTANCES: u64 = 200;
const ORACLE_BUDGET: Duration = Duration::from_secs(60);

const SEEDS: [u64; 3] = [0, 1, 2];
const N_TRAIN: usize = 500;
const N_TEST: usize = 100;
const MIN_FUSION_GAIN: f64 = 0.05;
const MIN_MASK_DROP: f64 = 0.03;
const PROPOSALS: f64 = 64.0;
const MIN_ATTN_CHANGE: f64 = 1e-6;
const TRAINING_BUDGET: Duration = Duration::from_secs(20 * 60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, elapsed: Duration, o: &Outcome) {
    println!(
        "{} criterion {id} ({name}): {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
fn off_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = rand_tensor(shape, rng, 0.1, 1.0);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

fn worst(a: GradCheckReport, b: GradCheckReport) -> GradCheckReport {
    GradCheckReport {
        max_rel_error: a.max_rel_error.max(b.max_rel_error),
        max_abs_error: a.max_abs_error.max(b.max_abs_error),
        checked: a.checked + b.checked,
    }
}

type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> crossview::Result<Var>>;

/// Every tape op, each reduced to a scalar through a random weighting.
fn op_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Tensor>, Builder)> {
    let m = rng.random_range(2..5);
    let n = rng.random_range(2..6);
    let k = rng.random_range(2..5);
    let mix = rand_tensor(&[m, n], rng, -1.0, 1.0);
    let weigh = move |t: &mut Tape, x: Var| -> crossview::Result<Var> {
        let w = t.constant(mix.clone());
        let p = t.mul(x, w)?;
        Ok(t.sum(p))
    };
    let x = rand_tensor(&[m, n], rng, -1.0, 1.0);
    let y = rand_tensor(&[m, n], rng, -1.0, 1.0);
    let pos = rand_tensor(&[m, n], rng, 0.2, 2.0);
    let gap = off_zero(&[m, n], rng);
    let near: Tensor = {
        let mut t = x.clone();
        for (v, g) in t.data_mut().iter_mut().zip(gap.data()) {
            *v += g;
        }
        t
    };
    let mut clampable = rand_tensor(&[m, n], rng, -1.0, 1.0);
    for v in clampable.data_mut() {
        if (v.abs() - 0.5).abs() < 0.05 {
            *v += 0.1;
        }
    }
    let row = rand_tensor(&[n], rng, -1.0, 1.0);
    let lhs = rand_tensor(&[m, k], rng, -1.0, 1.0);
    let rhs = rand_tensor(&[k, n], rng, -1.0, 1.0);
    let gather: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
    let elem = rng.random_range(0..m * n);

    let w = weigh.clone();
    let mut cases: Vec<(&'static str, Vec<Tensor>, Builder)> = vec![
        ("matmul", vec![lhs, rhs], Box::new(move |t, v| {
            let r = t.matmul(v[0], v[1])?;
            w(t, r)
        })),
    ];
    macro_rules! case {
        ($name:expr, $inputs:expr, |$t:ident, $v:ident| $body:expr) => {{
            let w = weigh.clone();
            cases.push(($name, $inputs, Box::new(move |$t: &mut Tape, $v: &[Var]| {
                let r = $body;
                w($t, r)
            })));
        }};
    }
    case!("transpose", vec![rand_tensor(&[n, m], rng, -1.0, 1.0)], |t, v| t.transpose(v[0])?);
    case!("add", vec![x.clone(), y.clone()], |t, v| t.add(v[0], v[1])?);
    case!("sub", vec![x.clone(), y.clone()], |t, v| t.sub(v[0], v[1])?);
    case!("mul", vec![x.clone(), y.clone()], |t, v| t.mul(v[0], v[1])?);
    case!("div", vec![x.clone(), pos.clone()], |t, v| t.div(v[0], v[1])?);
    case!("maximum", vec![x.clone(), near.clone()], |t, v| t.maximum(v[0], v[1])?);
    case!("minimum", vec![x.clone(), near.clone()], |t, v| t.minimum(v[0], v[1])?);
    case!("add_row", vec![x.clone(), row.clone()], |t, v| t.add_row(v[0], v[1])?);
    case!("mul_scalar", vec![x.clone()], |t, v| t.mul_scalar(v[0], -1.7));
    case!("add_scalar", vec![x.clone()], |t, v| t.add_scalar(v[0], 0.3));
    case!("relu", vec![gap.clone()], |t, v| t.relu(v[0]));
    case!("sigmoid", vec![x.clone()], |t, v| t.sigmoid(v[0]));
    case!("tanh", vec![x.clone()], |t, v| t.tanh(v[0]));
    case!("exp", vec![x.clone()], |t, v| t.exp(v[0]));
    case!("log", vec![pos.clone()], |t, v| t.log(v[0]));
    case!("pow_scalar", vec![pos.clone()], |t, v| t.pow_scalar(v[0], 2.5));
    case!("clamp", vec![clampable], |t, v| t.clamp(v[0], -0.5, 0.5));
    case!("softmax_rows", vec![x.clone()], |t, v| t.softmax_rows(v[0])?);
    case!("layer_norm", vec![x.clone(), row.clone(), rand_tensor(&[n], rng, -1.0, 1.0)], |t, v| {
        t.layer_norm(v[0], v[1], v[2], 1e-5)?
    });
    case!("concat_cols+slice_cols", vec![x.clone(), y.clone()], |t, v| {
        let c = t.concat_cols(&[v[0], v[1]])?;
        t.slice_cols(c, 1, n + 1)?
    });
    case!("slice_rows", vec![rand_tensor(&[m + 2, n], rng, -1.0, 1.0)], |t, v| t.slice_rows(v[0], 1, m + 1)?);
    case!("gather_rows", vec![x.clone()], |t, v| t.gather_rows(v[0], &gather)?);
    case!("reshape", vec![rand_tensor(&[n, m], rng, -1.0, 1.0)], |t, v| t.reshape(v[0], &[m, n])?);
    cases.push(("mean+element", vec![x.clone()], Box::new(move |t, v| {
        let e = t.element(v[0], elem)?;
        let s = t.mean(v[0]);
        t.mul(s, e)
    })));

    let mut labels: Vec<Label> = (0..m * n)
        .map(|_| match rng.random_range(0..3) {
            0 => Label::Positive,
            1 => Label::Negative,
            _ => Label::Ignore,
        })
        .collect();
    labels[0] = Label::Positive;
    let logits = rand_tensor(&[m * n, 1], rng, -3.0, 3.0);
    cases.push(("focal_loss", vec![logits], Box::new(move |t, v| {
        Ok(focal_loss_tape(t, v[0], &labels, 0.25, 2.0)?.unwrap_or_else(|| t.constant(Tensor::scalar(0.0))))
    })));
    let gts: Vec<BBox> = (0..m)
        .map(|_| {
            let x = rng.random_range(0.0..40.0);
            let y = rng.random_range(0.0..40.0);
            BBox::new(x, y, x + rng.random_range(6.0..14.0), y + rng.random_range(6.0..14.0))
        })
        .collect();
    let mut pred = Vec::new();
    for g in &gts {
        for c in [g.x1, g.y1, g.x2, g.y2] {
            let d = rng.random_range(0.5..2.0);
            pred.push(if rng.random_bool(0.5) { c + d } else { c - d });
        }
    }
    let pred = Tensor::matrix(m, 4, pred).unwrap();
    cases.push(("diou_loss", vec![pred], Box::new(move |t, v| diou_loss_tape(t, v[0], &gts))));
    cases
}

fn random_roiset(p: usize, d: usize, rng: &mut ChaCha8Rng) -> RoISet {
    let boxes = (0..p)
        .map(|_| {
            let x = rng.random_range(0.0..50.0);
            let y = rng.random_range(0.0..50.0);
            BBox::new(x, y, x + rng.random_range(2.0..12.0), y + rng.random_range(2.0..12.0))
        })
        .collect();
    RoISet::new(rand_tensor(&[p, d], rng, -1.0, 1.0), boxes, 64.0, 64.0).unwrap()
}

fn random_transformer(rng: &mut ChaCha8Rng, d: usize, heads: usize, blocks: usize) -> CrossTransformer {
    let cfg = CrossTransformerConfig {
        d,
        n_heads: heads,
        ffn_hidden: 2 * d,
        n_blocks: blocks,
        ..CrossTransformerConfig::default()
    };
    let mut ct = CrossTransformer::new(cfg, rng.random()).unwrap();
    let ids: Vec<_> = ct.params.ids().collect();
    for id in ids {
        for v in ct.params.get_mut(id).data_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    ct
}

/// Finite differences against the whole bidirectional stack. Key biases add
/// the same logit to every entry of a softmax row, so their exact gradient is
/// zero and a relative error is undefined; they stay fixed in the comparison
/// and the second value is their largest analytic gradient.
fn full_block_check(rng: &mut ChaCha8Rng) -> (GradCheckReport, f64) {
    let heads = [1, 2][rng.random_range(0..2)];
    let blocks = rng.random_range(1..3);
    let ct = random_transformer(rng, 4 * heads, heads, blocks);
    let cc = random_roiset(rng.random_range(2..5), ct.config.d, rng);
    let mlo = random_roiset(rng.random_range(2..5), ct.config.d, rng);
    let mix_cc = rand_tensor(&[cc.len(), ct.config.d], rng, -1.0, 1.0);
    let mix_mlo = rand_tensor(&[mlo.len(), ct.config.d], rng, -1.0, 1.0);
    let params: Vec<(bool, Tensor)> = ct.params.iter().map(|(n, t)| (n.ends_with(".bk"), t.clone())).collect();
    let mut inputs = vec![cc.features.clone(), mlo.features.clone()];
    inputs.extend(params.iter().filter(|p| !p.0).map(|p| p.1.clone()));

    let loss = |t: &mut Tape, v: &[Var], key_bias: &mut dyn FnMut(&mut Tape, &Tensor) -> Var| {
        let mut free = v[2..].iter();
        let vars: Vec<Var> = params
            .iter()
            .map(|(fixed, value)| if *fixed { key_bias(t, value) } else { *free.next().unwrap() })
            .collect();
        let bind = Bindings::from_vars(vars);
        let out = bidirectional_fuse(
            t,
            &bind,
            &ct.weights,
            &ct.config,
            ViewInput { features: v[0], centers: &cc.centers },
            ViewInput { features: v[1], centers: &mlo.centers },
        )?;
        let a = t.constant(mix_cc.clone());
        let b = t.constant(mix_mlo.clone());
        let pa = t.mul(out.cc, a)?;
        let pb = t.mul(out.mlo, b)?;
        let (sa, sb) = (t.sum(pa), t.sum(pb));
        t.add(sa, sb)
    };
    let report = check_gradients(&inputs, FD_STEP, |t, v| loss(t, v, &mut |t, x| t.constant(x.clone()))).unwrap();

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone().with_requires_grad(true))).collect();
    let mut biases = Vec::new();
    let out = loss(&mut tape, &vars, &mut |t, x| {
        let v = t.leaf(x.clone().with_requires_grad(true));
        biases.push(v);
        v
    })
    .unwrap();
    let grads = tape.gradients(out).unwrap();
    let bias_grad = biases
        .iter()
        .filter_map(|&v| grads.get(v))
        .flatten()
        .fold(0.0f64, |m, g| m.max(g.abs()));
    (report, bias_grad)
}

fn criterion_gradients() -> Outcome {
    let mut total = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, checked: 0 };
    let mut worst_op = ("", 0.0);
    let mut max_bias_grad: f64 = 0.0;
    for seed in 0..GRAD_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, inputs, f) in op_cases(&mut rng) {
            let r = check_gradients(&inputs, FD_STEP, |t, v| f(t, v)).unwrap();
            if r.max_rel_error > worst_op.1 {
                worst_op = (name, r.max_rel_error);
            }
            total = worst(total, r);
        }
        let (r, bias_grad) = full_block_check(&mut rng);
        max_bias_grad = max_bias_grad.max(bias_grad);
        if r.max_rel_error > worst_op.1 {
            worst_op = ("full block", r.max_rel_error);
        }
        total = worst(total, r);
    }
    Outcome {
        pass: total.max_rel_error < GRAD_REL_TOL && max_bias_grad <= ZERO_GRAD_TOL,
        detail: format!(
            "max relative error {:.2e} (worst: {}) over {} components, {GRAD_INSTANCES} instances, tol {GRAD_REL_TOL:e}; \
             key-bias gradient {max_bias_grad:.1e} (exactly zero up to {ZERO_GRAD_TOL:e})",
            total.max_rel_error, worst_op.0, total.checked
        ),
    }
}

fn criterion_attention() -> Outcome {
    let (mut row_err, mut aux_err, mut main_err) = (0.0f64, 0.0f64, 0.0f64);
    let mut min_shift = f64::INFINITY;
    for seed in 0..ATTN_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let heads = [1, 2, 4][rng.random_range(0..3)];
        let d = heads * [4, 8][rng.random_range(0..2)];
        let blocks = rng.random_range(1..4);
        let ct = random_transformer(&mut rng, d, heads, blocks);
        let cc = random_roiset(rng.random_range(2..9), d, &mut rng);
        let mlo = random_roiset(rng.random_range(2..9), d, &mut rng);
        let base = ct.fuse(&cc, &mlo).unwrap();
        row_err = row_err
            .max(base.cc_attention.max_row_sum_error())
            .max(base.mlo_attention.max_row_sum_error());

        let mut perm: Vec<usize> = (0..mlo.len()).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % mlo.len());
        let moved = ct.fuse(&cc, &mlo.permuted(&perm)).unwrap();
        aux_err = aux_err.max(moved.cc.features.max_abs_diff(&base.cc.features));

        let mut perm: Vec<usize> = (0..cc.len()).collect();
        perm.rotate_left(1 + seed as usize % cc.len());
        let moved = ct.fuse(&cc.permuted(&perm), &mlo).unwrap();
        let expect = base.cc.permuted(&perm);
        main_err = main_err.max(moved.cc.features.max_abs_diff(&expect.features));

        let (dx, dy) = (rng.random_range(2.0..10.0), rng.random_range(-10.0..-2.0));
        let shifted_boxes = cc.boxes.iter().map(|b| BBox::new(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy)).collect();
        let shifted = RoISet::new(cc.features.clone(), shifted_boxes, 64.0, 64.0).unwrap();
        let moved = ct.fuse(&shifted, &mlo).unwrap();
        min_shift = min_shift.min(moved.cc_attention.max_abs_diff(&base.cc_attention));
    }
    Outcome {
        pass: row_err <= ROW_SUM_TOL && aux_err <= PERM_TOL && main_err <= PERM_TOL && min_shift > 0.0,
        detail: format!(
            "row-sum err {row_err:.1e}, aux-permutation {aux_err:.1e}, main-permutation {main_err:.1e}, \
             smallest |dA| under translation {min_shift:.1e} ({ATTN_INSTANCES} instances)"
        ),
    }
}

fn criterion_metrics() -> Outcome {
    let mut mismatches = Vec::new();
    for seed in 0..ORACLE_INSTANCES {
        let images = common::random_images(seed);
        for (i, im) in images.iter().enumerate() {
            if nms_indices(&im.detections, NMS_IOU).unwrap() != common::oracle_nms(&im.detections, NMS_IOU) {
                mismatches.push(format!("nms seed {seed} image {i}"));
            }
            let m = match_detections(&im.detections, &im.gts, MATCH_IOU).unwrap();
            if m.matched_gt != common::oracle_match(&im.detections, &im.gts, MATCH_IOU) {
                mismatches.push(format!("match seed {seed} image {i}"));
            }
        }
        let curve = froc_curve(&images, MATCH_IOU).unwrap();
        if curve.points != common::oracle_froc(&images, MATCH_IOU) {
            mismatches.push(format!("froc seed {seed}"));
        }
        for target in [0.0, 0.25, 0.5, 1.0, 2.0, 3.5] {
            if recall_at_fppi(&curve, target) != common::oracle_recall_at(&images, MATCH_IOU, target) {
                mismatches.push(format!("recall@{target} seed {seed}"));
            }
        }
    }
    // A 10x10 gt and a 10x2 box inside it overlap with IoU exactly 0.2.
    let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
    let at = Detection::new(BBox::new(0.0, 0.0, 10.0, 2.0), 0.9);
    let above = Detection::new(BBox::new(0.0, 0.0, 10.0, 2.01), 0.9);
    let exact = common::oracle_iou(&at.bbox, &gt) == 0.2;
    let at_rejected = match_detections(&[at], &[gt], MATCH_IOU).unwrap().matched_gt == vec![None];
    let above_taken = match_detections(&[above], &[gt], MATCH_IOU).unwrap().matched_gt == vec![Some(0)];
    Outcome {
        pass: mismatches.is_empty() && exact && at_rejected && above_taken,
        detail: format!(
            "{} oracle mismatches over {ORACLE_INSTANCES} instances{}; IoU=0.2 exact {exact}, rejected {at_rejected}, IoU>0.2 matched {above_taken}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    }
}

struct SeedRun {
    fused_r1: f64,
    single_r1: f64,
    nopos_r1: f64,
    cc_r1: f64,
    cc_masked_r1: f64,
    registration: RegistrationReport,
    registration_masked: RegistrationReport,
    attention_change: f64,
}

fn r1(curve: &FrocCurve) -> f64 {
    recall_at_fppi(curve, 1.0)
}

fn attention_gap(a: &Detector, b: &Detector, studies: &[StudyPair]) -> f64 {
    let mut gap: f64 = 0.0;
    for s in studies {
        let mut ta = Tape::new();
        let (_, fa) = a.forward(&mut ta, s).unwrap();
        let mut tb = Tape::new();
        let (_, fb) = b.forward(&mut tb, s).unwrap();
        for v in View::BOTH {
            for (ha, hb) in fa.attention(v).iter().flatten().zip(fb.attention(v).iter().flatten()) {
                gap = gap.max(ta.value(*ha).max_abs_diff(tb.value(*hb)));
            }
        }
    }
    gap
}

fn train_seed(seed: u64) -> SeedRun {
    let data = generate_dataset(Seeds::from_run(seed).data, N_TRAIN + N_TEST, &GeneratorConfig::default()).unwrap();
    let (train, test) = data.split_at(N_TRAIN);
    let tc = TrainConfig::default();
    let fused_cfg = DetectorConfig::default();
    let mut single_cfg = fused_cfg.clone();
    single_cfg.fusion.n_blocks = 0;
    let mut nopos_cfg = fused_cfg.clone();
    nopos_cfg.fusion.use_positional = false;

    let fused = fit(fused_cfg, &tc, train, seed).unwrap();
    let single = fit(single_cfg, &tc, train, seed).unwrap();
    let nopos = fit(nopos_cfg, &tc, train, seed).unwrap();

    let masked: Vec<StudyPair> = test.iter().map(|s| mask_masses(s, View::Mlo)).collect();
    let one = single_mass_studies(test);
    let one_masked: Vec<StudyPair> = one.iter().map(|s| mask_masses(s, View::Mlo)).collect();
    let run = SeedRun {
        fused_r1: r1(&evaluate(&fused, test, &View::BOTH).unwrap()),
        single_r1: r1(&evaluate(&single, test, &View::BOTH).unwrap()),
        nopos_r1: r1(&evaluate(&nopos, test, &View::BOTH).unwrap()),
        cc_r1: r1(&evaluate(&fused, test, &[View::Cc]).unwrap()),
        cc_masked_r1: r1(&evaluate(&fused, &masked, &[View::Cc]).unwrap()),
        registration: registration_metrics(&fused, &one, View::Cc, MATCH_IOU).unwrap().0,
        registration_masked: registration_metrics(&fused, &one_masked, View::Cc, MATCH_IOU).unwrap().0,
        attention_change: attention_gap(&fused, &nopos, test),
    };
    println!(
        "  seed {seed}: R@1 fused {:.3} single {:.3} no-pos {:.3} | CC R@1 {:.3} masked {:.3} | registration acc {:?} masked {:?} | max |dA| {:.2e}",
        run.fused_r1,
        run.single_r1,
        run.nopos_r1,
        run.cc_r1,
        run.cc_masked_r1,
        run.registration.accuracy,
        run.registration_masked.accuracy,
        run.attention_change
    );
    run
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criteria_training(runs: &[SeedRun], elapsed: Duration) -> [Outcome; 4] {
    let gain = mean(runs.iter().map(|r| r.fused_r1 - r.single_r1));
    let drop = mean(runs.iter().map(|r| r.cc_r1 - r.cc_masked_r1));
    let chance = 10.0 / PROPOSALS;
    let reg_ok = runs.iter().all(|r| r.registration.accuracy.is_some_and(|a| a > chance));
    let masked_ok = runs.iter().all(|r| r.registration_masked.accuracy == Some(0.0));
    let pe_wins = runs.iter().filter(|r| r.fused_r1 >= r.nopos_r1).count();
    let attn_ok = runs.iter().all(|r| r.attention_change > MIN_ATTN_CHANGE);
    let fmt = |v: Vec<Option<f64>>| {
        v.iter()
            .map(|a| a.map_or("undefined".into(), |x| format!("{x:.3}")))
            .collect::<Vec<_>>()
            .join(", ")
    };
    [
        Outcome {
            pass: gain >= MIN_FUSION_GAIN && elapsed < TRAINING_BUDGET,
            detail: format!(
                "mean fused-minus-single R@1 {gain:.3} (need >= {MIN_FUSION_GAIN}); training and evaluation took {:.0}s of {}s",
                elapsed.as_secs_f64(),
                TRAINING_BUDGET.as_secs()
            ),
        },
        Outcome {
            pass: drop >= MIN_MASK_DROP,
            detail: format!("mean CC R@1 drop with MLO masses masked {drop:.3} (need >= {MIN_MASK_DROP})"),
        },
        Outcome {
            pass: reg_ok && masked_ok,
            detail: format!(
                "accuracy per seed [{}] (need > {chance:.4}); masked [{}] (need exactly 0)",
                fmt(runs.iter().map(|r| r.registration.accuracy).collect()),
                fmt(runs.iter().map(|r| r.registration_masked.accuracy).collect())
            ),
        },
        Outcome {
            pass: pe_wins >= 2 && attn_ok,
            detail: format!(
                "with-PE R@1 >= no-PE in {pe_wins}/3 seeds (need 2); attention differs in every seed: {attn_ok}"
            ),
        },
    ]
}

fn read_outputs(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, "seed = 5\n[data]\nstudies = 30\n[train]\nepochs = 2\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_crossview");
    let runs = ["a", "b"].map(|name| {
        let out = tmp.path().join(name);
        let mut steps: Vec<Vec<String>> = vec![vec!["run".into()]];
        steps.push(vec!["eval".into(), "--view".into(), "cc".into(), "--dir".into(), out.join("eval-cc").display().to_string()]);
        steps.push(vec![
            "train".into(),
            "--single-view".into(),
            "--dir".into(),
            out.join("train-single").display().to_string(),
        ]);
        for args in steps {
            let status = Command::new(bin)
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .args(&args)
                .stderr(std::process::Stdio::null())
                .status()
                .unwrap();
            assert!(status.success(), "crossview {args:?} failed");
        }
        read_outputs(&out)
    });
    let differing: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let same_files = runs[0].iter().map(|f| &f.0).eq(runs[1].iter().map(|f| &f.0));
    Outcome {
        pass: same_files && differing.is_empty() && runs[0].len() >= 10,
        detail: format!(
            "{} CSV files from run, eval --view cc and train --single-view; byte-identical across reruns: {}",
            runs[0].len(),
            same_files && differing.is_empty()
        ),
    }
}

fn main() {
    let timed = |id: usize, name: &str, budget: Option<Duration>, f: &dyn Fn() -> Outcome| -> bool {
        let t = Instant::now();
        let mut o = f();
        let el = t.elapsed();
        if let Some(b) = budget {
            if el >= b {
                o.pass = false;
                o.detail.push_str(&format!("; over the {}s budget", b.as_secs()));
            }
        }
        report(id, name, el, &o);
        o.pass
    };
    let mut all = timed(1, "gradient check", Some(GRAD_BUDGET), &criterion_gradients);
    all &= timed(2, "attention properties", Some(ATTN_BUDGET), &criterion_attention);
    all &= timed(3, "metric oracles", Some(ORACLE_BUDGET), &criterion_metrics);

    let t = Instant::now();
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| train_seed(s)).collect();
    let el = t.elapsed();
    let names = ["fusion benefit", "mask-out", "registration", "positional ablation"];
    for (k, o) in criteria_training(&runs, el).iter().enumerate() {
        report(4 + k, names[k], if k == 0 { el } else { Duration::ZERO }, o);
        all &= o.pass;
    }
    all &= timed(8, "reproducibility", None, &criterion_reproducibility);

    if !all {
        println!("acceptance: FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
