use sequelrec_core::data::{generate_synthetic, SyntheticConfig, SyntheticMode};
use sequelrec_core::Result;

use crate::commands::write_file;
use crate::GenerateArgs;

pub fn run(args: GenerateArgs) -> Result<()> {
    let defaults = SyntheticConfig::default();
    let cfg = SyntheticConfig {
        n_users: args.users.unwrap_or(defaults.n_users),
        n_items: args.items.unwrap_or(defaults.n_items),
        items_per_user: (
            args.items_per_user_min.unwrap_or(defaults.items_per_user.0),
            args.items_per_user_max.unwrap_or(defaults.items_per_user.1),
        ),
        n_sequential_items: args.sequential_items.unwrap_or(defaults.n_sequential_items),
        n_series: (
            args.series_min.unwrap_or(defaults.n_series.0),
            args.series_max.unwrap_or(defaults.n_series.1),
        ),
        max_interactions_per_user: args
            .max_interactions
            .unwrap_or(defaults.max_interactions_per_user),
        mode: args
            .mode
            .as_deref()
            .map(SyntheticMode::parse)
            .transpose()?
            .unwrap_or(SyntheticMode::Mixed),
        popularity_exponent: args
            .popularity_exponent
            .unwrap_or(defaults.popularity_exponent),
        continuation_prob: args.continuation_prob.unwrap_or(defaults.continuation_prob),
        seed: args.seed.unwrap_or(defaults.seed),
    };

    let dataset = generate_synthetic(&cfg)?;
    dataset.write_dir(&args.out)?;

    let echo = format!(
        "mode = {}\nusers = {}\nitems = {}\nsequential_items = {}\nseries_min = {}\nseries_max = {}\nitems_per_user_min = {}\nitems_per_user_max = {}\nmax_interactions = {}\npopularity_exponent = {}\ncontinuation_prob = {}\nseed = {}\n",
        cfg.mode.as_str(),
        cfg.n_users,
        cfg.n_items,
        cfg.n_sequential_items,
        cfg.n_series.0,
        cfg.n_series.1,
        cfg.items_per_user.0,
        cfg.items_per_user.1,
        cfg.max_interactions_per_user,
        cfg.popularity_exponent,
        cfg.continuation_prob,
        cfg.seed
    );
    write_file(&args.out.join("generate_config.txt"), &echo)?;

    println!(
        "generated {} interactions for {} users / {} items ({} series) into {}",
        dataset.interactions.len(),
        dataset.n_users,
        dataset.n_items,
        dataset.series.len(),
        args.out.display()
    );
    Ok(())
}
