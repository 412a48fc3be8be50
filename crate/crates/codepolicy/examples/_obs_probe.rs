use codepolicy::oracle::generate_dataset;
use codepolicy::sim::task::TaskKind;

fn main() {
    let ds = generate_dataset(TaskKind::Pick, 1, 12000).unwrap();
    let r = &ds.records[0];
    for t in 0..r.steps.len() {
        let ks = if r.steps[t].is_keystep { "K" } else { " " };
        let p = &r.steps[t].obs.proprio;
        println!("t={t:2} {ks} proprio=({:.3},{:.3},{:.3},g{},h{}) instr={}",
            p[0], p[1], p[2], p[3], p[4],
            r.steps[t].instruction.lines().next().unwrap());
    }
    // diff base grids of consecutive steps around boundaries
    for (a, b) in [(8usize, 9usize), (13, 14)] {
        let ba = &r.steps[a].obs.base;
        let bb = &r.steps[b].obs.base;
        let ndiff = ba.iter().zip(bb).filter(|(x, y)| x != y).count();
        let maxdiff = ba.iter().zip(bb).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        println!("base diff t={a} vs t={b}: {ndiff} cells, max {maxdiff:.3}");
    }
}
