//! Staged command-line front end. Each subcommand reads the previous
//! stage's artifact and writes its own, so a run is resumable from any
//! intermediate file. All the logic lives in the library.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ocod::classify;
use ocod::config::{ClassLabels, Config, Resolver};
use ocod::error::{Error, Result};
use ocod::geolocate::PropertyRow;
use ocod::rules::LabelledAddress;
use ocod::{analyze, evaluate, expand, ingest, parse, pipeline};

#[derive(Parser)]
#[command(name = "ocod", about = "Offshore property register pipeline", version)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    input: Option<PathBuf>,

    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Labelling rule file (TOML), defaults to the built-in rules.
    #[arg(long, global = true)]
    rules: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    resolver: Option<ResolverArg>,

    #[arg(long, global = true, value_enum)]
    class_labels: Option<ClassLabelsArg>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    replicates: Option<usize>,

    /// Directory for stage artifacts and the run manifest.
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResolverArg {
    Largest,
    Hmm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassLabelsArg {
    Type1,
    Type2,
}

#[derive(Subcommand)]
enum Command {
    /// Label register addresses with entity spans.
    Label,
    /// Parse a labelled artifact into one row per property.
    Parse,
    /// Expand numeric ranges in a parsed artifact.
    Expand,
    /// Geolocate and classify, producing the enhanced dataset.
    Classify,
    /// Score spans or classes against a ground-truth file.
    Evaluate {
        /// Ground-truth JSON (spans) to score the labelling against.
        #[arg(long)]
        gold: PathBuf,
    },
    /// Areal and financial statistics over an enhanced dataset.
    Analyze {
        /// Adjacency pair CSV (area_a, area_b) for Moran's I.
        #[arg(long)]
        adjacency: Option<PathBuf>,
        /// Observed sale prices CSV (msoa, price) for mean sampling.
        #[arg(long)]
        prices: Option<PathBuf>,
    },
    /// Run every stage in order.
    Pipeline,
}

fn build_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(rules) = &cli.rules {
        config.paths.rules = Some(rules.clone());
    }
    if let Some(dir) = &cli.report_dir {
        config.paths.report_dir = Some(dir.clone());
    }
    if let Some(resolver) = cli.resolver {
        config.pipeline.resolver = match resolver {
            ResolverArg::Largest => Resolver::Largest,
            ResolverArg::Hmm => Resolver::Hmm,
        };
    }
    if let Some(labels) = cli.class_labels {
        config.pipeline.class_labels = match labels {
            ClassLabelsArg::Type1 => ClassLabels::Type1,
            ClassLabelsArg::Type2 => ClassLabels::Type2,
        };
    }
    if let Some(seed) = cli.seed {
        config.pipeline.seed = seed;
    }
    if let Some(replicates) = cli.replicates {
        config.pipeline.replicates = replicates;
    }
    Ok(config)
}

fn required_input(cli: &Cli, config: &Config) -> Result<PathBuf> {
    cli.input
        .clone()
        .or_else(|| config.paths.register.clone())
        .ok_or_else(|| Error::Config("no input file given (--input)".into()))
}

fn output_path(cli: &Cli, default_name: &str) -> PathBuf {
    cli.output.clone().unwrap_or_else(|| PathBuf::from(default_name))
}

fn read_labelled(path: &PathBuf) -> Result<Vec<LabelledAddress>> {
    if !path.exists() {
        return Err(Error::MissingInput { path: path.clone() });
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let record = ocod::ingest::TitleRecord {
            title_number: rec.get(0).unwrap_or("").to_string(),
            address_text: rec.get(1).unwrap_or("").to_string(),
            country_incorporated: String::new(),
            recorded_price: None,
            region: String::new(),
        };
        let spans = pipeline::decode_spans(rec.get(2).unwrap_or("")).map_err(|e| {
            Error::Schema { path: path.clone(), detail: e.to_string() }
        })?;
        out.push(LabelledAddress { record, spans });
    }
    Ok(out)
}

fn read_parsed(path: &PathBuf) -> Result<Vec<parse::ParsedAddress>> {
    if !path.exists() {
        return Err(Error::MissingInput { path: path.clone() });
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec.map_err(|e| Error::Schema { path: path.clone(), detail: e.to_string() })?);
    }
    Ok(out)
}

fn run(cli: &Cli) -> Result<()> {
    let config = build_config(cli)?;
    match &cli.command {
        Command::Label => {
            let input = required_input(cli, &config)?;
            let load = ingest::load_register(&input, &config.columns.register)?;
            let rules = pipeline::rules_from_config(&config)?;
            let labelled = pipeline::run_label(
                &load,
                &rules,
                config.pipeline.resolver,
                config.pipeline.seed,
            )?;
            let out = output_path(cli, "labelled.csv");
            pipeline::write_labelled(&out, &labelled)?;
            let spans: usize = labelled.iter().map(|l| l.spans.len()).sum();
            println!(
                "labelled {} addresses ({} rejected) with {} spans -> {}",
                labelled.len(),
                load.rejects.len(),
                spans,
                out.display()
            );
        }
        Command::Parse => {
            let input = required_input(cli, &config)?;
            let labelled = read_labelled(&input)?;
            let mut stats = parse::ParseStats::default();
            let rows = pipeline::run_parse(&labelled, &mut stats);
            let out = output_path(cli, "parsed.csv");
            pipeline::write_parsed(&out, &rows)?;
            println!(
                "parsed {} addresses into {} rows ({} incomplete) -> {}",
                labelled.len(),
                rows.len(),
                stats.incomplete_rows,
                out.display()
            );
        }
        Command::Expand => {
            let input = required_input(cli, &config)?;
            let rows = read_parsed(&input)?;
            let rows_in = rows.len();
            let mut stats = expand::ExpandStats::default();
            let expanded: Vec<parse::ParsedAddress> =
                pipeline::run_expand(rows, config.pipeline.range_cap, &mut stats)
                    .into_iter()
                    .map(|(row, _)| row)
                    .collect();
            let out = output_path(cli, "expanded.csv");
            pipeline::write_parsed(&out, &expanded)?;
            println!(
                "expanded {} rows into {} ({} capped, {} reversed) -> {}",
                rows_in,
                expanded.len(),
                stats.capped_ranges,
                stats.reversed_ranges,
                out.display()
            );
        }
        Command::Classify => {
            let input = required_input(cli, &config)?;
            let rows = read_parsed(&input)?;
            let lookup = pipeline::lookup_from_config(&config)?;
            let steps = pipeline::steps_from_config(&config)?;
            let mut by_title: Vec<Vec<parse::ParsedAddress>> = Vec::new();
            for row in rows {
                match by_title.last_mut() {
                    Some(g) if g[0].title_number == row.title_number => g.push(row),
                    _ => by_title.push(vec![row]),
                }
            }
            let mut property_rows: Vec<PropertyRow> = Vec::new();
            for group in by_title {
                let nested = group.len() >= 2;
                for address in group {
                    let text = address.rebuild_text();
                    property_rows.push(PropertyRow::new(address, text, nested));
                }
            }
            ocod::geolocate::localise(&mut property_rows, &lookup);
            for row in property_rows.iter_mut() {
                classify::classify_type1(row, &steps, &lookup);
            }
            classify::classify_type2(&mut property_rows, &lookup);
            let property_rows = classify::contract(property_rows, config.pipeline.class_labels);
            let out = output_path(cli, "enhanced.csv");
            pipeline::write_enhanced(&out, &property_rows)?;
            println!("classified {} rows -> {}", property_rows.len(), out.display());
        }
        Command::Evaluate { gold } => {
            let input = required_input(cli, &config)?;
            let labelled = read_labelled(&input)?;
            let truth = ingest::load_ground_truth(gold)?;
            let pred: BTreeMap<String, Vec<ocod::rules::Span>> = labelled
                .into_iter()
                .map(|l| (l.record.address_text, l.spans))
                .collect();
            let gold_spans: BTreeMap<String, Vec<ocod::rules::Span>> = truth
                .records
                .into_iter()
                .map(|r| (r.address_text, r.spans))
                .collect();
            let report = evaluate::score_spans(&pred, &gold_spans, false)?;
            print!("{}", report.text_table());
            if let Some(out) = &cli.output {
                fs::write(out, report.to_csv()).map_err(|e| Error::io(out, e))?;
            }
        }
        Command::Analyze { adjacency, prices } => {
            let input = required_input(cli, &config)?;
            let rows = pipeline::read_enhanced(&input)?;
            let counts = analyze::count_by_area(&rows, |r| r.area.lsoa.as_deref().unwrap_or(""));
            println!("properties: {}", rows.len());
            println!(
                "nested: {}",
                rows.iter().filter(|r| r.nested).count()
            );
            if counts.total() > 0.0 {
                println!("entropy: {:.2} bits", analyze::shannon_entropy(&counts)?);
            }
            if let Some(path) = adjacency {
                let pairs = analyze::WeightMatrix::pairs_from_csv(path)?;
                let weights =
                    analyze::WeightMatrix::from_pairs(counts.area_ids.clone(), &pairs, true)?;
                println!("morans_i: {:.3}", analyze::morans_i(&counts, &weights)?);
            }
            if let Some(path) = prices {
                let dist = analyze::PriceDistribution::from_csv(path)?;
                let msoa_counts = analyze::count_by_area(&rows, |r| r.area.msoa.as_deref().unwrap_or(""));
                let est = analyze::sample_mean_price(
                    &msoa_counts,
                    &dist,
                    config.pipeline.replicates as u32,
                    config.pipeline.seed,
                )?;
                let (total, low, high) = analyze::total_value(&est, &msoa_counts);
                println!(
                    "mean price: {:.0} [{:.0}, {:.0}]",
                    est.point_estimate, est.percentile_low, est.percentile_high
                );
                println!("total value: {total:.0} [{low:.0}, {high:.0}]");
            }
            for row in analyze::country_breakdown(&rows).iter().take(10) {
                println!(
                    "{}: {} titles, {} properties ({:.0}%)",
                    row.country,
                    row.titles,
                    row.properties,
                    row.property_share * 100.0
                );
            }
        }
        Command::Pipeline => {
            let mut config = config;
            if let Some(input) = &cli.input {
                config.paths.register = Some(input.clone());
            }
            let report_dir = config
                .paths
                .report_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("ocod-run"));
            let output = pipeline::run_from_config(&config, Some(&report_dir))?;
            if let Some(out) = &cli.output {
                pipeline::write_enhanced(out, &output.rows)?;
            }
            let s = &output.summary;
            println!(
                "{} titles -> {} parsed -> {} expanded -> {} final rows ({} nested)",
                s.titles_in, s.rows_parsed, s.rows_expanded, s.rows_contracted, s.nested_rows
            );
            println!("artifacts in {}", report_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
