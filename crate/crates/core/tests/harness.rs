mod common;

use common::{class_name, multi_label, single_label};
use fewshot::embedstore::{bind, EmbeddingMatrix, Manifest, Record, Split, TaskType};
use fewshot::eval::{kfold_run, repeated_runs, run_once, sweep, Method, RunConfig, SweepAxis};
use fewshot::prototypes::{PrototypeSet, Provenance};
use fewshot::synth::{bayes_accuracy, gen_gaussian, SynthSpec};
use fewshot::{Error, Strategy};

fn spec(sigma: f64) -> SynthSpec {
    SynthSpec {
        classes: 5,
        dim: 16,
        dev_per_class: 20,
        eval_per_class: 20,
        mean_scale: 1.0,
        sigma,
        seed: 3,
        ..SynthSpec::default()
    }
}

fn cfg(method: Method, k: usize) -> RunConfig {
    RunConfig {
        method,
        k,
        ..RunConfig::default()
    }
}

#[test]
fn zero_shot_with_eval_means_is_accurate() {
    let ds = gen_gaussian(&spec(0.1)).unwrap();
    let dim = ds.dim();
    let mut vectors = vec![0.0f64; ds.vocab().len() * dim];
    let eval = ds.positions_in_split(Split::Eval);
    let per_class = eval.len() as f64 / ds.vocab().len() as f64;
    for &p in &eval {
        let c = ds.labels(p)[0];
        for (a, &v) in vectors[c * dim..(c + 1) * dim]
            .iter_mut()
            .zip(ds.embedding(p))
        {
            *a += v as f64 / per_class;
        }
    }
    let protos = PrototypeSet::new(vectors, dim, ds.vocab().clone(), Provenance::External).unwrap();
    let rep = run_once(&ds, &cfg(Method::ZeroShot, 1), Some(&protos)).unwrap();
    assert!(rep.outcome.accuracy.unwrap() >= 0.95);
    assert_eq!(rep.outcome.n_support, 0);

    let err = run_once(&ds, &cfg(Method::ZeroShot, 1), None).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn duplicated_singletons_are_classified_perfectly() {
    let centers = [
        vec![1.0f32, 0.0, 0.0],
        vec![0.0, 1.0, 0.0],
        vec![0.3, 0.3, -1.0],
    ];
    let mut rows = Vec::new();
    let mut classes = Vec::new();
    let mut splits = Vec::new();
    for (c, v) in centers.iter().enumerate() {
        for split in [
            Split::Dev,
            Split::Dev,
            Split::Eval,
            Split::Eval,
            Split::Eval,
        ] {
            rows.push(v.clone());
            classes.push(c);
            splits.push(split);
        }
    }
    let ds = single_label(&rows, &classes, &splits);
    let rep = run_once(&ds, &cfg(Method::Avg, 2), None).unwrap();
    assert_eq!(rep.outcome.accuracy, Some(1.0));
    let cm = rep.outcome.confusion.unwrap();
    assert_eq!(cm.counts, vec![vec![3, 0, 0], vec![0, 3, 0], vec![0, 0, 3]]);
}

#[test]
fn full_mask_reproduces_plain_averaging() {
    let ds = gen_gaussian(&spec(1.0)).unwrap();
    for (plain, mi) in [(Method::Avg, Method::MiAvg), (Method::Lda, Method::MiLda)] {
        let a = run_once(&ds, &cfg(plain, 5), None).unwrap();
        let b = run_once(
            &ds,
            &RunConfig {
                ratio: Some(32.0),
                ..cfg(mi, 5)
            },
            None,
        )
        .unwrap();
        assert_eq!(a.outcome, b.outcome);
    }
}

#[test]
fn config_consistency_is_enforced() {
    let ds = gen_gaussian(&spec(1.0)).unwrap();
    let bad = RunConfig {
        ratio: Some(2.0),
        ..cfg(Method::Avg, 5)
    };
    assert!(matches!(run_once(&ds, &bad, None), Err(Error::Config(_))));
    assert!(matches!(
        run_once(&ds, &cfg(Method::MiAvg, 5), None),
        Err(Error::Config(_))
    ));
}

#[test]
fn multilabel_reports_map_only() {
    let rows = vec![
        vec![1.0f32, 0.0],
        vec![0.0, 1.0],
        vec![0.7, 0.7],
        vec![0.9, 0.1],
        vec![0.1, 0.9],
        vec![0.6, 0.6],
    ];
    let labels = vec![vec![0], vec![1], vec![0, 1], vec![0], vec![1], vec![0, 1]];
    let splits = [
        Split::Dev,
        Split::Dev,
        Split::Dev,
        Split::Eval,
        Split::Eval,
        Split::Eval,
    ];
    let ds = multi_label(&rows, &labels, &splits);
    let rep = run_once(&ds, &cfg(Method::Avg, 1), None).unwrap();
    assert!(rep.outcome.accuracy.is_none() && rep.outcome.confusion.is_none());
    assert_eq!(rep.outcome.map, Some(1.0));
    assert_eq!(rep.config.strategy, Some(Strategy::LeastOverlap));

    // Least-overlap sampling has no randomness, so repeated runs agree exactly.
    let point = repeated_runs(&ds, &cfg(Method::Avg, 1), 5, 99, None).unwrap();
    assert_eq!(point.std, Some(0.0));
}

fn two_identical_folds() -> fewshot::Dataset {
    let centers = [[1.0f32, 0.2], [0.1, 1.0], [-1.0, 0.3]];
    let mut data = Vec::new();
    let mut records = Vec::new();
    for fold in 0..2u32 {
        for (c, v) in centers.iter().enumerate() {
            for j in 0..3 {
                let jitter = 0.05 * j as f32;
                data.extend([v[0] + jitter, v[1] - jitter]);
                let id = format!("f{fold}-{c}-{j}");
                records.push(Record::new(
                    id,
                    &[class_name(c).as_str()],
                    Split::Dev,
                    Some(fold),
                ));
            }
        }
    }
    let m = EmbeddingMatrix::new(records.len(), 2, data).unwrap();
    bind(m, Manifest::new(TaskType::SingleLabel, records).unwrap()).unwrap()
}

#[test]
fn kfold_on_symmetric_folds() {
    let ds = two_identical_folds();
    let res = kfold_run(&ds, &cfg(Method::Avg, 3), None).unwrap();
    assert_eq!(res.folds.len(), 2);
    let a = res.folds[0].artifacts.report.metric();
    let b = res.folds[1].artifacts.report.metric();
    assert_eq!(a, b);
    assert_eq!(res.mean, (a + b) / 2.0);
}

#[test]
fn kfold_needs_folds() {
    let ds = gen_gaussian(&spec(1.0)).unwrap();
    assert!(matches!(
        kfold_run(&ds, &cfg(Method::Avg, 3), None),
        Err(Error::MissingFold { .. })
    ));
}

#[test]
fn five_fold_gives_five_reports() {
    let ds = gen_gaussian(&SynthSpec {
        folds: Some(5),
        ..spec(1.0)
    })
    .unwrap();
    let res = kfold_run(&ds, &cfg(Method::Lda, 4), None).unwrap();
    assert_eq!(res.folds.len(), 5);
    let folds: Vec<u32> = res.folds.iter().map(|f| f.fold).collect();
    assert_eq!(folds, [0, 1, 2, 3, 4]);
}

#[test]
fn repeated_runs_report_their_own_mean() {
    let ds = gen_gaussian(&spec(1.0)).unwrap();
    let point = repeated_runs(&ds, &cfg(Method::Avg, 3), 7, 42, None).unwrap();
    assert_eq!(point.runs.len(), 7);
    let mean = point.runs.iter().map(|r| r.metric).sum::<f64>() / 7.0;
    assert_eq!(point.mean, mean);
    for r in &point.runs {
        assert_eq!(r.seed, fewshot::seed::run_seed(42, r.run));
        let one = run_once(
            &ds,
            &RunConfig {
                seed: r.seed,
                ..cfg(Method::Avg, 3)
            },
            None,
        )
        .unwrap();
        assert_eq!(one.metric(), r.metric);
    }
    let single = repeated_runs(&ds, &cfg(Method::Avg, 3), 1, 42, None).unwrap();
    assert_eq!(single.std, None);
}

#[test]
fn sweep_points_match_independent_repeated_runs() {
    let ds = gen_gaussian(&spec(1.0)).unwrap();
    let axis = SweepAxis::SupportSize(vec![2, 5, 10]);
    let res = sweep(&ds, &cfg(Method::Avg, 1), &axis, 4, 7, None).unwrap();
    assert_eq!(res.points.len(), 3);
    for (p, k) in res.points.iter().zip([2, 5, 10]) {
        let direct = repeated_runs(&ds, &cfg(Method::Avg, k), 4, 7, None).unwrap();
        assert_eq!(p.value, Some(k as f64));
        assert_eq!(p.runs, direct.runs);
        assert_eq!((p.mean, p.std), (direct.mean, direct.std));
    }

    let ratios = SweepAxis::Ratio(fewshot::KRatio::PROTOCOL.to_vec());
    let res = sweep(&ds, &cfg(Method::MiAvg, 5), &ratios, 2, 7, None).unwrap();
    assert_eq!(res.points.len(), 7);
}

#[test]
fn tight_clusters_are_separable() {
    let ds = gen_gaussian(&spec(1e-9)).unwrap();
    let rep = run_once(&ds, &cfg(Method::Avg, 3), None).unwrap();
    assert_eq!(rep.outcome.accuracy, Some(1.0));
    assert_eq!(bayes_accuracy(&spec(1e-9), 1000, 0).unwrap(), 1.0);
}

#[test]
fn label_free_data_is_at_chance() {
    let s = SynthSpec {
        classes: 4,
        dim: 8,
        dev_per_class: 10,
        eval_per_class: 500,
        mean_scale: 0.0,
        sigma: 3.0,
        ..SynthSpec::default()
    };
    let ds = gen_gaussian(&s).unwrap();
    let acc = run_once(&ds, &cfg(Method::Avg, 10), None).unwrap().metric();
    let n = 2000.0;
    let sigma = (0.25f64 * 0.75 / n).sqrt();
    assert!((acc - 0.25).abs() <= 4.0 * sigma, "{acc}");
}

#[test]
fn bayes_estimate_is_stable_across_seeds() {
    let s = spec(1.2);
    let n = 20_000;
    let a = bayes_accuracy(&s, n, 1).unwrap();
    let b = bayes_accuracy(&s, n, 2).unwrap();
    let sigma = (a * (1.0 - a) / n as f64).sqrt();
    assert!((a - b).abs() <= 3.0 * sigma * 2f64.sqrt(), "{a} {b}");
}

#[test]
fn synthetic_datasets_are_reproducible() {
    let s = SynthSpec {
        folds: Some(3),
        ..spec(0.7)
    };
    let a = gen_gaussian(&s).unwrap();
    let b = gen_gaussian(&s).unwrap();
    assert_eq!(a.base_matrix().to_bytes(), b.base_matrix().to_bytes());
    assert_eq!(a.manifest().to_jsonl(), b.manifest().to_jsonl());
    let c = gen_gaussian(&SynthSpec { seed: 4, ..s }).unwrap();
    assert_ne!(a.base_matrix().to_bytes(), c.base_matrix().to_bytes());
}
