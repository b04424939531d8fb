use sequelrec_core::data::Dataset;
use sequelrec_core::sampling::{history_at, sample_subgraph, SamplingConfig};
use sequelrec_core::{Error, Result};

use crate::commands::write_file;
use crate::DumpArgs;

pub fn run(args: DumpArgs) -> Result<()> {
    let dataset = Dataset::read_dir(&args.data)?;
    let user = dataset
        .user_labels
        .iter()
        .position(|l| l == &args.user)
        .or_else(|| args.user.parse::<usize>().ok().filter(|&u| u < dataset.n_users))
        .ok_or_else(|| Error::Lookup(format!("user '{}'", args.user)))?;

    let graph = dataset.build_graph()?;
    let view = graph.snapshot(args.time);
    let cfg = SamplingConfig {
        m: args.m,
        recent_n: args.recent_n,
        truncate_expansion: true,
    };
    let history = history_at(&view, user, cfg.recent_n)?;
    let sub = sample_subgraph(&view, user, &history, &cfg)?;

    let mut buf = Vec::new();
    sub.write_text_dump(&mut buf).map_err(|e| Error::io(&args.out, e))?;
    write_file(&args.out, &String::from_utf8_lossy(&buf))?;
    println!(
        "dumped sub-graph of user {} at t {}: {} users, {} items, {} edges -> {}",
        args.user,
        args.time,
        sub.users.len(),
        sub.items.len(),
        sub.n_edges(),
        args.out.display()
    );
    Ok(())
}
