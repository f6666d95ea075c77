//! CSV emission with shortest round-trip float formatting.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

pub type Writer = csv::Writer<BufWriter<File>>;

pub fn create(dir: &Path, name: &str, header: &[&str]) -> csv::Result<Writer> {
    let file = File::create(dir.join(name))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header)?;
    Ok(w)
}

/// Shortest decimal string that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_string()
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
