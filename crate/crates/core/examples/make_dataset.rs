//! Writes a synthetic dataset as CSV, e.g. for the `bench` command.
//!
//! cargo run --release --example make_dataset -- B 1000 7 configs/data/dataset_b.csv

use std::fs::File;
use std::io::BufWriter;

use qmi_sdr::synthetic::{generate, SyntheticName, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() != 4 {
        eprintln!("usage: make_dataset <rotation|A|B|C|D> <n> <seed> <out.csv>");
        std::process::exit(2);
    }
    let name: SyntheticName = args[0].parse()?;
    let n: usize = args[1].parse()?;
    let seed: u64 = args[2].parse()?;
    let (ds, _) = generate(&SyntheticSpec::new(name, n, seed))?;
    let comments = [format!("synthetic dataset {name}, n = {n}, seed = {seed}")];
    ds.write_csv(BufWriter::new(File::create(&args[3])?), &comments)?;
    Ok(())
}
