//! Run the whole pipeline on the bundled fixture register and write the
//! staged artifacts to a temporary directory.

use ocod::config::Config;

fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn main() -> anyhow::Result<()> {
    let mut config = Config::default();
    config.paths.register = Some(fixture("register.csv"));
    config.paths.onspd = Some(fixture("onspd.csv"));
    config.paths.pricepaid = Some(fixture("pricepaid.csv"));
    config.paths.voa = Some(fixture("voa.csv"));

    let out_dir = std::env::temp_dir().join("ocod_example_run");
    std::fs::create_dir_all(&out_dir)?;
    let output = ocod::pipeline::run_from_config(&config, Some(&out_dir))?;

    let s = &output.summary;
    println!("titles in          {}", s.titles_in);
    println!("rows parsed        {}", s.rows_parsed);
    println!("rows expanded      {}", s.rows_expanded);
    println!("rows after contract {}", s.rows_contracted);
    println!("rows geolocated    {}", s.rows_located);
    println!("nested rows        {}", s.nested_rows);
    println!("type 2 resolved    {}", s.type2_resolved);
    println!("\nartifacts in {}", out_dir.display());
    for entry in std::fs::read_dir(&out_dir)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
