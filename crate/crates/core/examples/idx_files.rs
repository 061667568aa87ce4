//! Writes and reads IDX files, and loads MNIST from a directory when one is
//! given.
//!
//! ```text
//! cargo run --release --example idx_files -- data/mnist
//! ```

use std::path::Path;

use densitometer::data::{encode_idx, load_mnist, parse_idx, IdxArray};

fn main() -> densitometer::Result<()> {
    let labels = IdxArray {
        dims: vec![6],
        body: vec![3, 1, 4, 1, 5, 9],
    };
    let bytes = encode_idx(&labels);
    println!(
        "encoded {} bytes, magic {:#010x}",
        bytes.len(),
        labels.magic()
    );
    let back = parse_idx(&bytes, Path::new("labels.idx"))?;
    println!("decoded {} items: {:?}", back.count(), back.body);

    let truncated = parse_idx(&bytes[..bytes.len() - 2], Path::new("labels.idx"));
    println!("truncated payload: {}", truncated.unwrap_err());

    if let Some(dir) = std::env::args().nth(1) {
        let (train, test) = load_mnist(Path::new(&dir))?;
        println!(
            "{dir}: {} training and {} test images of shape {:?}",
            train.len(),
            test.len(),
            train.item_shape()
        );
    }
    Ok(())
}
