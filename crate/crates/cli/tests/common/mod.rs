//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use maskbench_core::raster::{BinaryMask, WordImage};
use maskbench_core::store::AnnotationStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INK: [u8; 3] = [24, 30, 40];
pub const PAPER: [u8; 3] = [236, 230, 214];

/// Glyph-like stencil: one block of vertical strokes per character, with a
/// one-pixel margin around the word.
pub fn stencil(width: usize, height: usize, chars: usize, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = ((width.saturating_sub(2)) / chars.max(1)).max(1);
    let mut strokes = Vec::new();
    for c in 0..chars {
        let x0 = 1 + c * cell;
        let stroke_w = rng.random_range(1..=cell.saturating_sub(1).max(1));
        let top = rng.random_range(1..=(height / 3).max(1));
        strokes.push((x0, x0 + stroke_w, top));
    }
    BinaryMask::from_fn(width, height, |x, y| {
        y + 1 < height
            && strokes
                .iter()
                .any(|&(x0, x1, top)| x >= x0 && x < x1 && y >= top && x + 1 < width)
    })
}

/// Dark ink on light paper where the stencil is set.
pub fn paint(id: &str, mask: &BinaryMask) -> WordImage {
    let pixels = mask.bits().iter().map(|&b| if b { INK } else { PAPER }).collect();
    WordImage::new(id, mask.width(), mask.height(), pixels).unwrap()
}

pub struct CorpusItem {
    pub image_id: String,
    pub truth: String,
    pub stencil: BinaryMask,
}

/// Write stencil-painted PNGs plus `corpus.tsv` into `dir`. Each entry is
/// `(image_id, truth, width, height)`.
pub fn write_corpus(dir: &Path, rows: &[(&str, &str, usize, usize)]) -> (PathBuf, Vec<CorpusItem>) {
    fs::create_dir_all(dir.join("images")).unwrap();
    let mut text = String::from("# image_id\tpath\ttruth\n");
    let mut items = Vec::new();
    for (i, &(id, truth, w, h)) in rows.iter().enumerate() {
        let st = stencil(w, h, truth.chars().count(), 1000 + i as u64);
        fs::write(dir.join(format!("images/{id}.png")), paint(id, &st).to_png_bytes()).unwrap();
        text.push_str(&format!("{id}\timages/{id}.png\t{truth}\n"));
        items.push(CorpusItem {
            image_id: id.to_string(),
            truth: truth.to_string(),
            stencil: st,
        });
    }
    let manifest = dir.join("corpus.tsv");
    fs::write(&manifest, text).unwrap();
    (manifest, items)
}

/// Start the service on an ephemeral loopback port in a background thread.
pub fn spawn_server(store: AnnotationStore) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            maskbench::service::serve(listener, store).await.unwrap();
        });
    });
    rx.recv_timeout(Duration::from_secs(10)).unwrap()
}

pub fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .unwrap()
}

pub fn decode_gray(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let img = image::load_from_memory(bytes).unwrap().to_luma8();
    let (w, h) = img.dimensions();
    (w as usize, h as usize, img.into_raw())
}

pub fn decode_rgb(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let img = image::load_from_memory(bytes).unwrap().to_rgb8();
    let (w, h) = img.dimensions();
    (w as usize, h as usize, img.into_raw())
}

pub fn binary_from_png(bytes: &[u8]) -> BinaryMask {
    let (w, h, data) = decode_gray(bytes);
    BinaryMask::new(w, h, data.iter().map(|&v| v != 0).collect()).unwrap()
}

/// Every file under `root`, relative path and contents, sorted by path.
pub fn read_tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_maskbench")
}
