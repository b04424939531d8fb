use sequelrec_core::checkpoint::load_checkpoint;
use sequelrec_core::data::{leave_one_out, Dataset};
use sequelrec_core::eval::{evaluate, EvalConfig, EvalTarget};
use sequelrec_core::sampling::SamplingConfig;
use sequelrec_core::{Error, Result};

use crate::commands::{parse_usize_list, write_file};
use crate::EvalArgs;

pub fn run(args: EvalArgs) -> Result<()> {
    let dataset = Dataset::read_dir(&args.data)?;
    let (params, seed) = load_checkpoint(&args.checkpoint)?;
    if params.cfg.n_users != dataset.n_users || params.cfg.n_items != dataset.n_items {
        return Err(Error::Data(format!(
            "checkpoint was trained on {}x{} users/items, dataset has {}x{}",
            params.cfg.n_users, params.cfg.n_items, dataset.n_users, dataset.n_items
        )));
    }
    let which = match args.which.as_str() {
        "test" => EvalTarget::Test,
        "validation" | "val" => EvalTarget::Validation,
        other => {
            return Err(Error::Config(format!(
                "unknown eval target '{other}' (expected test|validation)"
            )))
        }
    };
    let ks = match &args.k {
        Some(raw) => parse_usize_list(raw, "k")?,
        None => vec![5, 10, 20],
    };

    let graph = if args.ablate_sequels {
        dataset.build_graph_ablated()?
    } else {
        dataset.build_graph()?
    };
    let split = leave_one_out(&dataset);
    let cfg = EvalConfig {
        ks,
        exclude_seen: !args.no_exclude_seen,
        sampling: SamplingConfig {
            m: args.m.unwrap_or(4),
            recent_n: args.recent_n.unwrap_or(params.cfg.max_order),
            truncate_expansion: true,
        },
        per_user: args.per_user_dump,
        candidate_sample: args.candidates,
        candidate_seed: seed,
    };
    let mut report = evaluate(&params, &graph, &split, which, &cfg)?;
    report.dataset = args.data.display().to_string();
    report.seed = seed;
    report.config_echo = format!(
        "m = {}\nrecent_n = {}\nexclude_seen = {}\nwhich = {:?}\n",
        cfg.sampling.m, cfg.sampling.recent_n, cfg.exclude_seen, which
    );

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    if let Some(per_user) = &report.per_user {
        let mut csv = String::from("user,rank\n");
        for r in per_user {
            csv.push_str(&format!("{},{}\n", r.user, r.rank));
        }
        write_file(&args.out.join("per_user.csv"), &csv)?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&args.out.join("report.json"), &json)?;
    write_file(&args.out.join("report.txt"), &report.render_text())?;

    print!("{}", report.render_text());
    Ok(())
}
