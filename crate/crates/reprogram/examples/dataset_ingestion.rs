//! Dataset ingestion: IDX image/label files and UCR-style CSV series, with
//! the normalization records that make the mappings invertible.
//!
//! ```bash
//! cargo run --example dataset_ingestion
//! ```

use reprogram::data::{load_idx_dataset, parse_ucr_csv};

fn main() -> reprogram::Result<()> {
    // A miniature IDX pair: two 2x2 "images" and their labels, built by hand.
    let mut images = Vec::new();
    images.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    for dim in [2u32, 2, 2] {
        images.extend_from_slice(&dim.to_be_bytes());
    }
    images.extend_from_slice(&[0, 64, 128, 255, 255, 192, 64, 0]);

    let mut labels = Vec::new();
    labels.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    labels.extend_from_slice(&2u32.to_be_bytes());
    labels.extend_from_slice(&[1, 0]);

    let ds = load_idx_dataset(&images, &labels)?;
    println!("IDX: {} samples of dim {}, {} classes", ds.len(), ds.dim(), ds.num_classes);
    println!("  sample 0 (pixels 0,64,128,255 scaled to [-1,1]): {:?}", ds.samples.row(0));
    println!("  labels: {:?}", ds.labels);
    let raw = ds.normalization.denormalize(0, ds.samples.row(0)[1]);
    println!("  denormalized second pixel: {raw} (was u8 64)");

    // UCR-style CSV: label first, then the series; labels need not be
    // contiguous and get remapped in ascending order.
    let csv = "\
2,1.0,2.0,3.0,4.0
-1,5.0,5.0,5.0,5.0
2,0.0,-1.0,1.0,0.0
";
    let ds = parse_ucr_csv(csv)?;
    println!("\nCSV: {} series of length {}, {} classes", ds.len(), ds.dim(), ds.num_classes);
    println!("  labels remapped (-1 -> 0, 2 -> 1): {:?}", ds.labels);
    println!("  series 0 after per-series standardization + clamp: {:?}", ds.samples.row(0));
    println!("  constant series 1 becomes zeros: {:?}", ds.samples.row(1));
    Ok(())
}
