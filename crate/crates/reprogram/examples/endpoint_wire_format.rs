//! The black-box endpoint wire format, exercised in memory: build a request
//! frame, run it through the serving loop, and check the response matches the
//! in-process forward pass bit for bit.
//!
//! For the real child-process version, run the CLI in one terminal:
//!
//! ```bash
//! cargo run --bin reprogram -- serve --checkpoint source.ckpt
//! ```
//!
//! and type `Q 1 64` followed by one line of 64 values.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use reprogram::blackbox::serve_model;
use reprogram::synthetic;
use reprogram::Tensor;
use std::io::Cursor;
use std::io::Write;

fn main() -> reprogram::Result<()> {
    let task = synthetic::generate(7);
    let model = synthetic::train_bundled_source(&task, 7)?;
    let d = model.input_dim();
    let k = model.num_classes();

    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let n = 3;
    let batch = Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())?;

    // Request frame: header line, then one line per sample.
    let mut request = Vec::new();
    writeln!(request, "Q {n} {d}")?;
    for r in 0..n {
        let line: Vec<String> = batch.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(request, "{}", line.join(" "))?;
    }
    println!("request frame header + first 60 bytes:");
    let preview = String::from_utf8_lossy(&request);
    println!("  {}", &preview[..preview.len().min(60)]);

    let mut response = Vec::new();
    let served = serve_model(&model, &mut Cursor::new(request), &mut response)?;
    let text = String::from_utf8(response).expect("utf8 response");
    println!("served {served} rows; response:");
    for line in text.lines() {
        println!("  {line}");
    }

    // The decimal strings round-trip exactly.
    let direct = model.forward(&batch)?;
    let mut parsed = Vec::new();
    for line in text.lines() {
        for tok in line.split_whitespace() {
            parsed.push(tok.parse::<f64>().expect("numeric"));
        }
    }
    assert_eq!(parsed.len(), n * k);
    assert_eq!(direct.data(), &parsed[..]);
    println!("endpoint output equals in-process forward bit for bit");
    Ok(())
}
