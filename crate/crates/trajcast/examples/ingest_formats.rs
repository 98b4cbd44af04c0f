//! Parse trajectory records from the two text formats, downsample, and cut
//! sliding-window clips.
//!
//!   cargo run --example ingest_formats

use trajcast::ingest::{
    downsample, parse_apolloscape, parse_generic_csv, segment_clips, ReferencePolicy,
    SegmentConfig, Unit,
};

fn main() -> trajcast::Result<()> {
    // Whitespace format: frame_id object_id object_type x y z l w h heading.
    let mut text = String::new();
    for frame in 0..24 {
        let t = frame as f64;
        text.push_str(&format!("{frame} 11 1 {:.2} 0.00 0 4 2 1.5 0\n", t * 1.2));
        text.push_str(&format!(
            "{frame} 12 3 {:.2} 6.00 0 1 1 1.7 0\n",
            5.0 + t * 0.3
        ));
        if frame % 3 != 0 {
            // An intermittently tracked cyclist.
            text.push_str(&format!("{frame} 13 4 {:.2} -4.00 0 2 1 1.6 0\n", t * 0.8));
        }
    }
    let outcome = parse_apolloscape(text.as_bytes(), false)?;
    println!(
        "whitespace format: {} records, {} malformed lines",
        outcome.records.len(),
        outcome.errors.len()
    );

    // Keep every second frame, then renumber.
    let records = downsample(&outcome.records, 2)?;
    println!("after downsample by 2: {} records", records.len());

    let seg = SegmentConfig {
        t_history: 4,
        t_future: 4,
        stride: 2,
        window_half_width: 90.0,
        reference: ReferencePolicy::Centroid,
        frame_rate: 5.0,
        unit: Unit::Meters,
    };
    let mut next_id = 0;
    let clips = segment_clips(&records, &seg, 0, &mut next_id)?;
    println!("segmented into {} clips", clips.len());
    for clip in &clips {
        let gaps: usize = clip
            .mask
            .iter()
            .map(|m| m.iter().filter(|x| !**x).count())
            .sum();
        println!(
            "  clip {} @ frame {}: {} agents, {} masked-off frames",
            clip.scene_id,
            clip.origin_frame,
            clip.num_agents(),
            gaps
        );
    }

    // The same trajectories as CSV with named columns.
    let mut csv_text = String::from("frame_id,agent_id,agent_type,x,y\n");
    for frame in 0..12 {
        csv_text.push_str(&format!(
            "{frame},21,small_vehicle,{:.2},1.0\n",
            frame as f64
        ));
    }
    let outcome = parse_generic_csv(csv_text.as_bytes(), true)?;
    println!("csv format: {} records", outcome.records.len());
    Ok(())
}
