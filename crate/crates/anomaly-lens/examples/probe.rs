fn main() {
    use anomaly_lens::schedule::{parse, ParseOptions};
    for t in ["R1[x0]W2[x1]C2W1[x2]", "R1[x0]W2[x1]R1[x1]", "R1[x0]W2[x1]C1C2"] {
        match parse(t, ParseOptions::default()) {
            Ok(s) => {
                println!("{t} -> {} ops={}", s.format(), s.len());
                for e in anomaly_lens::pops::pops(&s) { println!("   edge {:?} {} -> {} kind {:?} anchors {:?}", e.var, e.from, e.to, e.kind, e.anchors); }
            }
            Err(e) => println!("{t} -> ERR {e}"),
        }
    }
}
