use std::path::PathBuf;

use sequelrec_core::data::{
    generate_synthetic, leave_one_out, Dataset, SyntheticConfig, SyntheticMode,
};
use sequelrec_core::encoding::PositionalKind;
use sequelrec_core::eval::{evaluate, EvalConfig, EvalTarget};
use sequelrec_core::model::FusionStrategy;
use sequelrec_core::train::{train, TrainConfig};
use sequelrec_core::{Error, Result};

use crate::commands::{parse_u64_list, write_file};
use crate::SweepArgs;

enum Axis {
    Layers(Vec<usize>),
    NSequences(Vec<usize>),
    SeqLength(Vec<usize>),
    Fusion(Vec<FusionStrategy>),
    Positional(Vec<PositionalKind>),
}

fn parse_axis(args: &SweepArgs) -> Result<Axis> {
    let grid = &args.grid;
    let usizes = || crate::commands::parse_usize_list(grid, "grid");
    match args.axis.as_str() {
        "layers" => Ok(Axis::Layers(usizes()?)),
        "n-sequences" => Ok(Axis::NSequences(usizes()?)),
        "seq-length" => Ok(Axis::SeqLength(usizes()?)),
        "fusion" => grid
            .split(',')
            .map(|s| FusionStrategy::parse(s.trim()))
            .collect::<Result<Vec<_>>>()
            .map(Axis::Fusion),
        "positional" => grid
            .split(',')
            .map(|s| PositionalKind::parse(s.trim()))
            .collect::<Result<Vec<_>>>()
            .map(Axis::Positional),
        other => Err(Error::Config(format!(
            "unknown sweep axis '{other}' (expected layers|n-sequences|seq-length|fusion|positional)"
        ))),
    }
}

fn base_train_config(args: &SweepArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        d: args.train.d,
        layers: args.train.layers,
        m: args.train.m,
        recent_n: 50,
        epochs: args.train.epochs,
        patience: Some(args.train.patience),
        seed,
        ..TrainConfig::default()
    }
}

fn synthetic_base(args: &SweepArgs, seed: u64) -> Result<SyntheticConfig> {
    Ok(SyntheticConfig {
        n_users: args.users,
        n_items: args.items,
        n_sequential_items: args.sequential_items,
        n_series: (6, 6),
        items_per_user: (8, 12),
        max_interactions_per_user: 12,
        mode: SyntheticMode::parse(&args.mode)?,
        seed,
        ..SyntheticConfig::default()
    })
}

struct Point {
    label: String,
    dataset: Dataset,
    cfg: TrainConfig,
}

fn load_data_dir(args: &SweepArgs) -> Result<Dataset> {
    match &args.data {
        Some(dir) => Dataset::read_dir(dir),
        None => Err(Error::Config(format!(
            "axis '{}' sweeps the model; pass --data DIR",
            args.axis
        ))),
    }
}

fn point_for(args: &SweepArgs, axis: &Axis, idx: usize, seed: u64) -> Result<Point> {
    let mut cfg = base_train_config(args, seed);
    let (label, dataset) = match axis {
        Axis::Layers(vs) => {
            cfg.layers = vs[idx];
            (vs[idx].to_string(), load_data_dir(args)?)
        }
        Axis::Fusion(vs) => {
            cfg.fusion = vs[idx];
            (vs[idx].as_str().to_string(), load_data_dir(args)?)
        }
        Axis::Positional(vs) => {
            cfg.positional = vs[idx];
            (vs[idx].as_str().to_string(), load_data_dir(args)?)
        }
        Axis::NSequences(vs) => {
            let mut synth = synthetic_base(args, seed)?;
            synth.n_series = (vs[idx], vs[idx]);
            (vs[idx].to_string(), generate_synthetic(&synth)?)
        }
        Axis::SeqLength(vs) => {
            let mut synth = synthetic_base(args, seed)?;
            synth.items_per_user = (vs[idx].max(3), vs[idx]);
            synth.max_interactions_per_user = vs[idx];
            (vs[idx].to_string(), generate_synthetic(&synth)?)
        }
    };
    Ok(Point { label, dataset, cfg })
}

fn axis_len(axis: &Axis) -> usize {
    match axis {
        Axis::Layers(v) | Axis::NSequences(v) | Axis::SeqLength(v) => v.len(),
        Axis::Fusion(v) => v.len(),
        Axis::Positional(v) => v.len(),
    }
}

pub fn run(args: SweepArgs) -> Result<()> {
    let axis = parse_axis(&args)?;
    let seeds = parse_u64_list(&args.seeds, "seeds")?;
    let out_csv: PathBuf = args.out.join("sweep.csv");
    let mut rows = String::from("axis,value,seed,hit10,ndcg10,status\n");

    for idx in 0..axis_len(&axis) {
        for &seed in &seeds {
            let row = match run_point(&args, &axis, idx, seed) {
                Ok((label, hit, ndcg)) => {
                    println!("{} = {label} seed {seed}: hit@10 {hit:.4} ndcg@10 {ndcg:.4}", args.axis);
                    format!("{},{label},{seed},{hit:.6},{ndcg:.6},ok\n", args.axis)
                }
                Err(err) => {
                    // Record the failure and keep sweeping.
                    eprintln!("point {idx} seed {seed} failed: {err}");
                    format!("{},point{idx},{seed},,,error\n", args.axis)
                }
            };
            rows.push_str(&row);
        }
    }
    write_file(&out_csv, &rows)?;
    println!("wrote {}", out_csv.display());
    Ok(())
}

fn run_point(args: &SweepArgs, axis: &Axis, idx: usize, seed: u64) -> Result<(String, f64, f64)> {
    let point = point_for(args, axis, idx, seed)?;
    let outcome = train(&point.dataset, &point.cfg, |_| {})?;
    if let Some(reason) = outcome.aborted {
        return Err(Error::Numeric(reason));
    }
    let graph = point.dataset.build_graph()?;
    let split = leave_one_out(&point.dataset);
    let eval_cfg = EvalConfig {
        ks: vec![10],
        exclude_seen: true,
        sampling: point.cfg.sampling(),
        per_user: false,
        ..EvalConfig::default()
    };
    let report = evaluate(&outcome.params, &graph, &split, EvalTarget::Test, &eval_cfg)?;
    Ok((point.label, report.hit[&10], report.ndcg[&10]))
}
