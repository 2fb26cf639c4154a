// SPDX-License-Identifier: Apache-2.0

mod common;

use equilibria::checkpoint::{self, CheckpointMeta};
use equilibria::equilibrium::SolverSettings;
use equilibria::harness::{
    ablation_run, evaluate, shifted_test_set, sweep, train, AblationSetup, DataLayout, LossKind, LossSteps, Model,
    ModelSpec, TrainConfig,
};
use equilibria::numerics::{sample, streams, DistributionSpec, RngStream};
use equilibria::sequence::ImplicitRnn;
use equilibria::tasks::{TaskKind, TaskSpec};

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_bit_deterministic() {
    let task = TaskSpec::standard(TaskKind::Addition, 3).unwrap();
    let ds = task.generate(256, &TaskKind::Addition.train_distribution().unwrap(), 3, streams::DATA).unwrap();
    let (m1, r1) = train(&ModelSpec::implicit(6), &ds, &small_config(5)).unwrap();
    let (m2, r2) = train(&ModelSpec::implicit(6), &ds, &small_config(5)).unwrap();
    let meta = CheckpointMeta::default();
    assert_eq!(checkpoint::to_bytes(&m1, &meta).unwrap(), checkpoint::to_bytes(&m2, &meta).unwrap());
    let losses = |r: &equilibria::harness::RunRecord| r.epochs.iter().map(|e| e.train_loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(losses(&r1), losses(&r2));
    let (m3, _) = train(&ModelSpec::implicit(6), &ds, &small_config(6)).unwrap();
    assert_ne!(m1, m3);
}

#[test]
fn zero_shift_row_equals_standalone_evaluation() {
    let task = TaskSpec::standard(TaskKind::RollingAverage, 1).unwrap();
    let ds = task.generate(128, &TaskKind::RollingAverage.train_distribution().unwrap(), 1, streams::DATA).unwrap();
    let (model, _) = train(&ModelSpec::implicit(8), &ds, &small_config(1)).unwrap();
    let report = sweep(&model, &task, &[0.0, 10.0], 4, 300).unwrap();
    let direct = evaluate(&model, &shifted_test_set(&task, 0.0, 4, 300).unwrap()).unwrap();
    assert_eq!(report.rows[0].metrics, direct.metrics);
    assert_eq!(report.rows[0].iterations, direct.iterations);
}

#[test]
fn ablation_pairs_differ_only_in_feedback() {
    let setup = AblationSetup {
        task: TaskSpec::standard(TaskKind::Subtraction, 2).unwrap(),
        model: ModelSpec::implicit(5),
        train_samples: 128,
        test_samples: 100,
        shifts: vec![0.0, 100.0],
    };
    let report = ablation_run(&setup, &small_config(2), 2).unwrap();
    assert_eq!(report.config_diff, vec!["feedback".to_string()]);
    assert!(report.runs[0].config.feedback && !report.runs[1].config.feedback);
    assert_eq!(report.comparison.len(), 2);
    assert_eq!(report.comparison[1].metric, "mse");

    // Same seed, same draws: initial B, C, D agree and only A is masked.
    let layout = DataLayout {
        steps: 1,
        step_input: 50,
        step_target: 1,
        target_blocks: 1,
    };
    let mut off = ModelSpec::implicit(5);
    off.feedback = false;
    let a = Model::build(&ModelSpec::implicit(5), &layout, LossSteps::All, 2).unwrap();
    let b = Model::build(&off, &layout, LossSteps::All, 2).unwrap();
    let (ca, cb) = (a.implicit_core().unwrap(), b.implicit_core().unwrap());
    assert_eq!(ca.b(), cb.b());
    assert_eq!(ca.c(), cb.c());
    assert_eq!(ca.d(), cb.d());
    assert!(cb.a().is_strictly_upper());
}

#[test]
fn checkpoint_reload_predicts_identically() {
    let task = TaskSpec::standard(TaskKind::RollingArgmax, 0).unwrap();
    let ds = task.generate(64, &TaskKind::RollingArgmax.train_distribution().unwrap(), 0, streams::DATA).unwrap();
    let cfg = TrainConfig {
        loss: LossKind::SoftmaxCrossEntropy,
        loss_steps: LossSteps::Final,
        ..small_config(0)
    };
    let (model, _) = train(&ModelSpec::implicit_rnn(12, 10, false), &ds, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&path, &model, &CheckpointMeta::default()).unwrap();
    let (back, _) = checkpoint::load(&path).unwrap();
    assert_eq!(evaluate(&model, &ds).unwrap(), evaluate(&back, &ds).unwrap());
}

/// Raw parameters of an implicitRNN cell with a readout, row-major.
#[derive(Clone)]
struct Params {
    mats: Vec<Vec<f64>>,
    n: usize,
    input: usize,
    hidden: usize,
    out: usize,
}

impl Params {
    fn of(rnn: &ImplicitRnn) -> Self {
        let c = rnn.core();
        let r = rnn.readout().unwrap();
        Self {
            mats: [c.a(), c.b(), c.c(), c.d(), &r.weight, &r.bias]
                .iter()
                .map(|m| m.as_slice().to_vec())
                .collect(),
            n: c.dims().n,
            input: rnn.input_dim(),
            hidden: rnn.hidden_dim(),
            out: rnn.output_dim(),
        }
    }

    /// Outputs at every step and the smallest pre-activation magnitude seen.
    fn run(&self, seq: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let [a, b, c, d, w, bias] = [0, 1, 2, 3, 4, 5].map(|i| &self.mats[i]);
        let mut h = vec![0.0; self.hidden];
        let mut outs = Vec::new();
        let mut closest = f64::INFINITY;
        for step in seq.chunks(self.input) {
            let u: Vec<f64> = step.iter().chain(&h).copied().collect();
            let (x, z) = common::fixed_point(a, b, self.n, &u);
            closest = z.iter().fold(closest, |m, v| m.min(v.abs()));
            let y: Vec<f64> = common::matvec(c, self.hidden, &x)
                .iter()
                .zip(common::matvec(d, self.hidden, &u))
                .map(|(p, q)| p + q)
                .collect();
            let o: Vec<f64> = common::matvec(w, self.out, &y).iter().zip(bias).map(|(p, q)| p + q).collect();
            outs.push(o);
            h = y;
        }
        (outs, closest)
    }
}

#[test]
fn middle_step_loss_gradient_matches_finite_differences() {
    let settings = SolverSettings {
        epsilon: 1e-14,
        max_iterations: 100_000,
        ..SolverSettings::default()
    };
    let (t_len, mid) = (5, 2);
    let mut checked = 0;
    for seed in 0..40u64 {
        let rnn = ImplicitRnn::random(6, 2, 3, Some(2), settings, seed % 2 == 0, seed).unwrap();
        let mut rng = RngStream::new(seed, 500);
        let seq = sample(&DistributionSpec::normal(0.0, 1.0).unwrap(), (1, 2 * t_len), &mut rng)
            .unwrap()
            .into_vec();
        let target = [0.3, -0.7];
        let p = Params::of(&rnn);
        let (outs, closest) = p.run(&seq);
        if closest < 1e-3 {
            continue;
        }
        let loss = |outs: &[Vec<f64>]| 0.5 * outs[mid].iter().zip(&target).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
        let trace = rnn.forward(&seq).unwrap();
        let mut d_out = vec![vec![0.0; 2]; t_len];
        d_out[mid] = outs[mid].iter().zip(&target).map(|(o, t)| o - t).collect();
        let g = rnn.backward(&trace, &d_out).unwrap();
        let analytic = [
            g.core.da.as_slice(),
            g.core.db.as_slice(),
            g.core.dc.as_slice(),
            g.core.dd.as_slice(),
            g.readout_weight.as_ref().unwrap().as_slice(),
            g.readout_bias.as_ref().unwrap().as_slice(),
        ];
        let h = 1e-5;
        for (mi, grad) in analytic.iter().enumerate() {
            for k in 0..grad.len() {
                if mi == 0 && !rnn.core().feedback() && k / p.n >= k % p.n {
                    continue;
                }
                let mut plus = p.clone();
                plus.mats[mi][k] += h;
                let mut minus = p.clone();
                minus.mats[mi][k] -= h;
                let numeric = (loss(&plus.run(&seq).0) - loss(&minus.run(&seq).0)) / (2.0 * h);
                let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
                assert!(rel < 1e-4, "seed {seed} matrix {mi} entry {k}: {} vs {numeric}", grad[k]);
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "only {checked} entries away from kinks");
}
