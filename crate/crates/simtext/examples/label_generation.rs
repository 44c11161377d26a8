//! Turn annotation files into training masks.
//!
//! Shows both mask families side by side on the same instances:
//! similarity shrinking (every vertex pulled toward the vertex mean by a
//! fixed factor, so the expansion back is exact) and polygon offsetting
//! (every edge moved inward by an area-over-perimeter distance). Run with
//!
//! ```text
//! cargo run --example label_generation
//! ```

use simtext::formats::{parse_annotations, write_pgm, DatasetKind};
use simtext::geometry::{
    margin_ratio, offset_expand_distance, offset_shrink_distance, polygon_offset, JoinStyle,
};
use simtext::pipeline::{
    generate_offset_label, generate_similar_label, DEFAULT_EXPAND_BETA, DEFAULT_OFFSET_GAMMA,
    DELTA_LINE_LEVEL, DELTA_WORD_LEVEL,
};

fn main() -> simtext::Result<()> {
    // Two live words and one unreadable region flagged with the "###"
    // sentinel, in the comma-separated quad dialect.
    let icdar_text = "\
40,30,200,30,200,70,40,70,STATION
60,120,180,130,176,170,56,160,platform
210,120,250,120,250,150,210,150,###
";
    let anns = parse_annotations(DatasetKind::IcdarQuad, icdar_text)?;
    println!("parsed {} annotations:", anns.len());
    for ann in &anns {
        println!(
            "  {:>10}  area {:7.1}  perimeter {:6.1}  ignore={}",
            format!("{:?}", ann.transcription()),
            ann.polygon().area(),
            ann.polygon().perimeter(),
            ann.ignore()
        );
    }

    // The shrink factor fixes the relative margin between mask and text
    // boundary; these are the two defaults and what they imply.
    println!("\nshrink factor -> boundary margin (fraction of the mask size):");
    for delta in [DELTA_LINE_LEVEL, DELTA_WORD_LEVEL] {
        println!("  delta={delta}: margin ratio k={:.3}", margin_ratio(delta)?);
    }

    // The offset family instead derives a pixel distance per instance from
    // its area and perimeter, so elongated instances shrink less in
    // absolute terms than blocky ones of equal area. The outward distance
    // is measured on the shrunken region, which is all the detector side
    // will ever see.
    println!("\noffset distances (gamma={DEFAULT_OFFSET_GAMMA}, beta={DEFAULT_EXPAND_BETA}):");
    for ann in anns.iter().filter(|a| !a.ignore()) {
        let d_in = offset_shrink_distance(ann.polygon(), DEFAULT_OFFSET_GAMMA)?;
        let shrunk = polygon_offset(ann.polygon(), -d_in, JoinStyle::Miter)
            .into_iter()
            .next()
            .expect("these instances survive shrinking");
        let d_out = offset_expand_distance(&shrunk, DEFAULT_EXPAND_BETA)?;
        println!(
            "  {:>10}  inward {d_in:5.2} px, back outward {d_out:5.2} px",
            format!("{:?}", ann.transcription())
        );
    }

    // Render both mask families onto a canvas sized for the annotations.
    let (h, w) = (200, 280);
    let similar = generate_similar_label(&anns, DELTA_LINE_LEVEL, h, w)?;
    let offset = generate_offset_label(&anns, DEFAULT_OFFSET_GAMMA, h, w)?;
    println!("\nrendered {h}x{w} masks:");
    println!(
        "  similar: {} gt px, {} ignore px, {} skipped",
        similar.gt.count_ones(),
        similar.ignore.count_ones(),
        similar.skipped
    );
    println!(
        "  offset:  {} gt px, {} ignore px, {} skipped",
        offset.gt.count_ones(),
        offset.ignore.count_ones(),
        offset.skipped
    );

    let out_dir = std::env::temp_dir().join("simtext_label_generation");
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("similar.pgm"), write_pgm(&similar.gt))?;
    std::fs::write(out_dir.join("offset.pgm"), write_pgm(&offset.gt))?;
    std::fs::write(out_dir.join("ignore.pgm"), write_pgm(&similar.ignore))?;
    println!("\nwrote PGM previews to {}", out_dir.display());
    Ok(())
}
