use std::collections::BTreeMap;

use sequelrec_core::data::{infer_series_by_title, load_interactions, InteractionFormat};
use sequelrec_core::{Error, Result};

use crate::commands::write_file;
use crate::IngestArgs;

pub fn run(args: IngestArgs) -> Result<()> {
    let format = InteractionFormat::parse(&args.format)?;
    let (mut dataset, report) =
        load_interactions(&args.interactions, format, args.tolerance, args.sample_users)?;

    if let Some(series_path) = &args.series {
        sequelrec_core::data::load_series(series_path, &mut dataset)?;
    } else if args.infer_series {
        let titles_path = args.titles.as_ref().ok_or_else(|| {
            Error::Config("--infer-series needs --titles FILE (item<TAB>title lines)".into())
        })?;
        let text =
            std::fs::read_to_string(titles_path).map_err(|e| Error::io(titles_path, e))?;
        let label_to_id: BTreeMap<&str, usize> = dataset
            .item_labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut titles: BTreeMap<usize, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (label, title) = line.split_once('\t').ok_or_else(|| {
                Error::Data(format!(
                    "{} line {}: expected item<TAB>title",
                    titles_path.display(),
                    lineno + 1
                ))
            })?;
            if let Some(&id) = label_to_id.get(label.trim()) {
                titles.insert(id, title.trim().to_string());
            }
            // Titles for items that never appear in the log are ignored.
        }
        dataset.series = infer_series_by_title(&titles);
    }

    // Validate catalog + interactions together before writing anything.
    let graph = dataset.build_graph()?;
    dataset.write_dir(&args.out)?;
    write_file(&args.out.join("ingest_report.txt"), &report.sidecar_text())?;
    if let Some(dump) = &args.dump_graph {
        let mut buf = Vec::new();
        graph
            .write_text_dump(&mut buf)
            .map_err(|e| Error::io(dump, e))?;
        write_file(dump, &String::from_utf8_lossy(&buf))?;
    }

    println!(
        "ingested {} interactions: {} users / {} items / {} series ({} malformed rows) into {}",
        dataset.interactions.len(),
        dataset.n_users,
        dataset.n_items,
        dataset.series.len(),
        report.malformed.len(),
        args.out.display()
    );
    Ok(())
}
