//! Generates the two synthetic regression datasets, writes one to disk and
//! reads it back.
//!
//! cargo run --example generate_data

use loopsim::data::{generate, Dataset, GeneratorTag};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for tag in [GeneratorTag::Linear, GeneratorTag::Friedman1] {
        let data = generate(tag, 1000, 10, 1.0, 42)?;
        let y = data.targets();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        println!(
            "{:<10} {} rows x {} cols, mean target {mean:.3}",
            tag.as_str(),
            data.rows(),
            data.cols()
        );
    }

    let dir = std::env::temp_dir().join("loopsim-generate-data");
    std::fs::create_dir_all(&dir)?;
    let (csv, meta) = (dir.join("linear.csv"), dir.join("linear.json"));
    let data = generate(GeneratorTag::Linear, 200, 3, 0.5, 7)?;
    data.write_csv(&csv, &meta)?;
    let back = Dataset::read_csv(&csv, &meta)?;
    assert_eq!(back, data);
    println!("round trip through {} ok", csv.display());
    Ok(())
}
