//! Acceptance gate. Runs every primary criterion, prints one PASS/FAIL line
//! each and exits non-zero if any fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use num_bigint::BigInt;
use qdfc::cost::{estimate, Profile, Style};
use qdfc::data_io::{load_cifar10_batch, parse_cifar10, save_model, write_cifar10_batch, write_features, write_tensor, Cifar10Record, DataError, Dataset};
use qdfc::exec::{Mode, Plan, TensorValue};
use qdfc::few_shot::{classify_ncm, evaluate, EvalConfig};
use qdfc::fixed::QFormat;
use qdfc::graph::{DType, Graph, Layout, Node, Op, TensorSpec};
use qdfc::reference::{resnet9_like, separable_backbone, separable_items};
use qdfc::transforms::{convert_reduce_mean_to_gap, quantize_graph, run_pipeline, QuantConfig, DEFAULT_PIPELINE};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn all_formats(max_bits: u32) -> Vec<QFormat> {
    let mut out = Vec::new();
    for total in 1..=max_bits as u8 {
        for int_bits in 0..=total {
            for signed in [false, true] {
                if let Ok(f) = QFormat::new(signed, int_bits, total - int_bits) {
                    out.push(f);
                }
            }
        }
    }
    out
}

fn transform_equivalence() -> Outcome {
    let start = Instant::now();
    let mut graphs = 0;
    for pass in common::PASSES {
        for seed in 0..100 {
            let o = common::check(pass, seed, 4);
            ensure(o.float_changes > 0 && o.fixed_changes > 0, || format!("{pass} seed {seed} did not rewrite"))?;
            ensure(o.max_rel <= 1e-5, || format!("{pass} seed {seed}: float relative deviation {:e}", o.max_rel))?;
            ensure(o.compared > 0 && o.mismatched == 0, || format!("{pass} seed {seed}: {} of {} codes differ", o.mismatched, o.compared))?;
            graphs += 2;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{} passes, {graphs} graphs (float + fixed), bit-exact, {secs:.1} s", common::PASSES.len()))
}

/// Independent quantize∘relu: half-up rounding of max(x, 0), then clamp.
fn relu_oracle(x: f64, fmt: QFormat) -> i64 {
    let steps = x.max(0.0) * (1u64 << fmt.frac_bits()) as f64;
    let max = if fmt.is_signed() { (1i64 << (fmt.total_bits() - 1)) - 1 } else { (1i64 << fmt.total_bits()) - 1 };
    ((steps + 0.5).floor() as i64).min(max)
}

fn multithreshold_is_quantized_relu() -> Outcome {
    let (mut points, mut formats, mut degenerate) = (0usize, 0usize, 0usize);
    for act in all_formats(8) {
        if act.max_code() == 0 {
            // no positive code: Relu into this format is rejected up front
            let mut g = Graph::new("relu");
            g.inputs.push(TensorSpec::float("x", vec![1, 1], Layout::NC));
            g.add_node(Node::new("relu", Op::Relu {}, &["x"], &["y"]));
            g.outputs.push(TensorSpec::float("y", vec![1], Layout::N));
            let cfg = QuantConfig { conv: act, act, input: None, output: None };
            ensure(quantize_graph(&g, &cfg).is_err(), || format!("{act} accepted"))?;
            degenerate += 1;
            continue;
        }
        // half-LSB grid needs one more fractional bit and headroom on both sides
        let input = QFormat::signed(act.int_bits() + 2, act.frac_bits() + 1).map_err(|e| e.to_string())?;
        let lo = -4 * (1i64 << act.frac_bits()).max(4);
        let hi = 2 * act.max_code() + 8;
        let codes: Vec<i64> = (lo..=hi).filter(|c| input.contains_code(*c)).collect();
        let mut g = Graph::new("relu");
        g.inputs.push(TensorSpec::float("x", vec![1, codes.len()], Layout::NC));
        g.add_node(Node::new("relu", Op::Relu {}, &["x"], &["y"]));
        g.outputs.push(TensorSpec::float("y", vec![1], Layout::N));
        let cfg = QuantConfig { conv: act, act, input: Some(input), output: None };
        let q = quantize_graph(&g, &cfg).map_err(|e| e.to_string())?;
        let plan = Plan::new(&q).map_err(|e| e.to_string())?;
        let spec = plan.graph().inputs[0].clone();

        let fixed = plan.run(&[TensorValue::codes(spec.clone(), codes.clone())], Mode::Fixed).map_err(|e| e.to_string())?;
        let reals: Vec<f64> = codes.iter().map(|&c| input.to_real(c)).collect();
        let float = plan.run(&[TensorValue::real(spec, reals.clone())], Mode::Float).map_err(|e| e.to_string())?;
        let (fx, fl) = (fixed[0].to_reals(), float[0].to_reals());
        for (i, &x) in reals.iter().enumerate() {
            let want = act.to_real(relu_oracle(x, act));
            ensure(fx[i] == want && fl[i] == want, || format!("{act} at x={x}: fixed {} float {} want {want}", fx[i], fl[i]))?;
        }
        points += reals.len();
        formats += 1;
    }
    Ok(format!("{formats} formats up to 8 bits, {points} half-LSB points, 0 mismatches ({degenerate} formats without a positive code rejected)"))
}

fn bigint_half_up_div(num: BigInt, den: BigInt) -> BigInt {
    let two = BigInt::from(2);
    let n = &two * num + &den;
    let d = two * den;
    let (q, r) = (&n / &d, &n % &d);
    if r < BigInt::from(0) {
        q - 1
    } else {
        q
    }
}

fn reduce_mean_to_gap() -> Outcome {
    let mut r = common::rng(2024);
    let in_formats = ["s:2.4", "u:2.2", "s:3.5", "u:4.4"];
    let out_formats = ["u:2.2", "s:2.6", "s:4.4"];
    let (mut worst_rel, mut fixed_codes, mut negative_ties) = (0.0f64, 0usize, 0usize);
    for t in 0..1000 {
        let layout = if r.gen_bool(0.5) { Layout::NCHW } else { Layout::NHWC };
        let (n, c, h, w) = (r.gen_range(1..=2), r.gen_range(1..=4), r.gen_range(1..=8), r.gen_range(1..=8));
        let shape = match layout {
            Layout::NHWC => vec![n, h, w, c],
            _ => vec![n, c, h, w],
        };
        let numel: usize = shape.iter().product();
        let axes = layout.spatial_axes().to_vec();

        let mut g = Graph::new("mean");
        g.inputs.push(TensorSpec::float("x", shape.clone(), layout));
        g.add_node(Node::new("mean", Op::ReduceMean { axes: axes.clone(), out_fmt: None }, &["x"], &["y"]));
        g.outputs.push(TensorSpec::float("y", vec![n, c], Layout::NC));
        let (gap, _) = convert_reduce_mean_to_gap(&g).map_err(|e| e.to_string())?;
        let x = TensorValue::real(g.inputs[0].clone(), (0..numel).map(|_| r.gen_range(-4.0..4.0)).collect());
        let a = Plan::new(&g).and_then(|p| p.run(&[x.clone()], Mode::Float)).map_err(|e| e.to_string())?;
        let b = Plan::new(&gap).and_then(|p| p.run(&[x], Mode::Float)).map_err(|e| e.to_string())?;
        for (u, v) in a[0].to_reals().iter().zip(b[0].to_reals()) {
            let scale = u.abs().max(v.abs());
            if scale > 0.0 {
                worst_rel = worst_rel.max((u - v).abs() / scale);
            }
        }

        let fin: QFormat = in_formats[t % in_formats.len()].parse().unwrap();
        let fout: QFormat = out_formats[(t / 4) % out_formats.len()].parse().unwrap();
        let mut q = Graph::new("qmean");
        q.inputs.push(TensorSpec::new("x", shape.clone(), layout, DType::Fixed(fin)));
        let op = Op::ReduceMean { axes, out_fmt: Some(fout) };
        q.add_node(Node::new("mean", op, &["x"], &["y"]));
        q.outputs.push(TensorSpec::float("y", vec![n, c], Layout::NC));
        let (qgap, changed) = convert_reduce_mean_to_gap(&q).map_err(|e| e.to_string())?;
        ensure(changed == 1, || format!("tensor {t}: fixed mean not converted"))?;
        let codes: Vec<i64> = (0..numel).map(|_| r.gen_range(fin.min_code()..=fin.max_code())).collect();
        let xq = TensorValue::codes(q.inputs[0].clone(), codes.clone());
        let got = Plan::new(&qgap).and_then(|p| p.run(&[xq], Mode::Fixed)).map_err(|e| e.to_string())?;

        // documented rule: sum, multiply by ceil(2^30/area), round half up
        let area = (h * w) as i64;
        let inv = BigInt::from((1i64 << 30) + area - 1) / BigInt::from(area);
        let shift = 30 + fin.frac_bits() as u32;
        let idx = |b: usize, ch: usize, y: usize, xx: usize| match layout {
            Layout::NHWC => ((b * h + y) * w + xx) * c + ch,
            _ => ((b * c + ch) * h + y) * w + xx,
        };
        let got_codes = match &got[0].data {
            qdfc::exec::Data::Codes(v) => v.clone(),
            _ => return Err("fixed run returned reals".into()),
        };
        for b in 0..n {
            for ch in 0..c {
                let sum: i64 = (0..h).flat_map(|y| (0..w).map(move |xx| (y, xx))).map(|(y, xx)| codes[idx(b, ch, y, xx)]).sum();
                let prod = BigInt::from(sum) * &inv * (BigInt::from(1) << fout.frac_bits() as usize);
                let rule = bigint_half_up_div(prod, BigInt::from(1) << shift as usize);
                let exact = bigint_half_up_div(BigInt::from(sum) << fout.frac_bits() as usize, BigInt::from(area) << fin.frac_bits() as usize);
                let clamp = |v: BigInt| v.max(BigInt::from(fout.min_code())).min(BigInt::from(fout.max_code()));
                let (rule, exact) = (clamp(rule), clamp(exact));
                let g = BigInt::from(got_codes[b * c + ch]);
                ensure(g == rule, || format!("tensor {t}: got {g}, rule {rule}"))?;
                if g != exact {
                    ensure(sum < 0 && &exact - &g == BigInt::from(1), || format!("tensor {t}: sum {sum} gives {g}, exact mean {exact}"))?;
                    negative_ties += 1;
                }
                fixed_codes += 1;
            }
        }
    }
    ensure(worst_rel <= 1e-6, || format!("float relative deviation {worst_rel:e}"))?;
    Ok(format!(
        "1000 tensors, float max rel {worst_rel:.1e}, {fixed_codes} fixed codes match the Mul rule ({negative_ties} negative ties one code below the exact mean)"
    ))
}

fn fixed_point_exhaustive() -> Outcome {
    let (mut formats, mut checked) = (0usize, 0usize);
    for fmt in all_formats(12) {
        let step = 1.0 / (1u64 << fmt.frac_bits()) as f64;
        let (min, max) = if fmt.is_signed() {
            (-(1i64 << (fmt.total_bits() - 1)), (1i64 << (fmt.total_bits() - 1)) - 1)
        } else {
            (0, (1i64 << fmt.total_bits()) - 1)
        };
        ensure(fmt.min_code() == min && fmt.max_code() == max, || format!("{fmt}: code range"))?;
        let mut prev = i64::MIN;
        // half-LSB grid two steps past each end
        for k in (2 * min - 4)..=(2 * max + 4) {
            let x = k as f64 * step / 2.0;
            let code = fmt.quantize_code(x);
            let want = ((k as f64 / 2.0 + 0.5).floor() as i64).clamp(min, max);
            ensure(code == want, || format!("{fmt}: quantize({x}) = {code}, want {want}"))?;
            ensure(code >= prev, || format!("{fmt}: not monotone at {x}"))?;
            prev = code;
            if k % 2 == 0 && (min..=max).contains(&(k / 2)) {
                ensure(fmt.quantize_code(fmt.to_real(k / 2)) == k / 2, || format!("{fmt}: round trip of {}", k / 2))?;
            }
            checked += 1;
        }
        formats += 1;
    }
    Ok(format!("{formats} formats up to 12 bits, {checked} points, 0 violations"))
}

fn ncm_oracle() -> Outcome {
    let mut r = common::rng(77);
    let mut ties = 0;
    for i in 0..10_000 {
        let (way, dim) = (r.gen_range(1..=10), r.gen_range(1..=16));
        // integer coordinates make distances exact and ties frequent
        let integral = i % 2 == 0;
        let draw = |r: &mut rand_chacha::ChaCha8Rng| if integral { r.gen_range(-3..=3) as f64 } else { r.gen_range(-1.0..1.0) };
        let protos: Vec<Vec<f64>> = (0..way).map(|_| (0..dim).map(|_| draw(&mut r)).collect()).collect();
        let query: Vec<f64> = (0..dim).map(|_| draw(&mut r)).collect();
        let dists: Vec<f64> = protos.iter().map(|p| (0..dim).map(|k| (p[k] - query[k]).powi(2)).sum()).collect();
        let mut want = 0;
        for k in 1..way {
            if dists[k] < dists[want] {
                want = k;
            }
        }
        if dists.iter().filter(|&&d| d == dists[want]).count() > 1 {
            ties += 1;
        }
        let (got, _) = classify_ncm(&query, &protos).map_err(|e| e.to_string())?;
        ensure(got == want, || format!("instance {i}: got {got}, brute force {want}"))?;
    }
    Ok(format!("10000 instances ({ties} with tied distances), 0 label mismatches"))
}

fn synthetic_few_shot() -> Outcome {
    let (classes, side) = (8, 4);
    let (items, labels) = separable_items(classes, 30, side, 0.3, 11);
    let data = Dataset { items, labels };
    let float = separable_backbone(classes, side);
    let cfg: QuantConfig = "conv=s:1.5,act=u:2.2".parse().unwrap();
    let q = quantize_graph(&float, &cfg).map_err(|e| e.to_string())?;
    let (compiled, _) = run_pipeline(&q, DEFAULT_PIPELINE).map_err(|e| e.to_string())?;
    let eval = EvalConfig { way: 5, shot: 5, queries_per_class: 15, episodes: 100, seed: 0 };
    let fixed = evaluate(&Plan::new(&compiled).map_err(|e| e.to_string())?, Mode::Fixed, &data, &eval).map_err(|e| e.to_string())?;
    let flt = evaluate(&Plan::new(&float).map_err(|e| e.to_string())?, Mode::Float, &data, &eval).map_err(|e| e.to_string())?;
    ensure(fixed.mean_accuracy == 1.0, || format!("fixed accuracy {}", fixed.mean_accuracy))?;
    ensure(flt.mean_accuracy == fixed.mean_accuracy, || format!("float {} vs fixed {}", flt.mean_accuracy, fixed.mean_accuracy))?;
    Ok("100 episodes 5-way 5-shot: fixed 1.0, float 1.0".into())
}

fn pipeline_structure() -> Outcome {
    let float = resnet9_like(7);
    let relus = float.nodes.iter().filter(|n| matches!(n.op, Op::Relu {})).count();
    let cfg: QuantConfig = "conv=s:1.5,act=u:2.2".parse().unwrap();
    let (g, _) = run_pipeline(&quantize_graph(&float, &cfg).map_err(|e| e.to_string())?, DEFAULT_PIPELINE).map_err(|e| e.to_string())?;
    let h = g.op_histogram();
    let count = |k: &str| h.get(k).copied().unwrap_or(0);
    ensure(count("Transpose") == 0, || format!("{} Transpose nodes remain", count("Transpose")))?;
    ensure(count("Relu") == 0 && count("ReduceMean") == 0 && count("Conv") == 0, || format!("unlowered nodes: {h:?}"))?;
    ensure(count("MultiThreshold") + count("MVAU") == relus, || format!("{relus} activations but {h:?}"))?;
    ensure(count("GlobalAccPool") == 1, || format!("{h:?}"))?;
    let gap = g.nodes.iter().find(|n| n.op.kind() == "GlobalAccPool").unwrap();
    let tail: Vec<_> = g.consumers(gap.output()).into_iter().map(|i| &g.nodes[i]).collect();
    ensure(tail.len() == 1 && tail[0].op.kind() == "Mul" && g.is_output(tail[0].output()), || "GAP is not followed by the output Mul".into())?;
    Ok(format!("0 Transpose, {} MVAU + {} MultiThreshold for {relus} activations, one GlobalAccPool+Mul tail", count("MVAU"), count("MultiThreshold")))
}

fn profile_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/pynq_z1.json")
}

fn cost_orderings() -> Outcome {
    let profile = Profile::load(&profile_path()).map_err(|e| e.to_string())?;
    let build = |quant: &str| -> Result<Graph, String> {
        let cfg: QuantConfig = quant.parse().map_err(|e: qdfc::transforms::TransformError| e.to_string())?;
        let q = quantize_graph(&resnet9_like(7), &cfg).map_err(|e| e.to_string())?;
        Ok(run_pipeline(&q, DEFAULT_PIPELINE).map_err(|e| e.to_string())?.0)
    };
    let (g6, g16) = (build("conv=s:1.5,act=u:2.2")?, build("conv=s:1.15,act=u:8.8")?);
    let est = |g: &Graph, s: Style| estimate(g, &profile.arch(s)).map_err(|e| e.to_string());
    let (s6, y6, s16, y16) = (est(&g6, Style::Streaming)?, est(&g6, Style::Systolic)?, est(&g16, Style::Streaming)?, est(&g16, Style::Systolic)?);
    for (name, s, y) in [("6-bit", &s6, &y6), ("16-bit", &s16, &y16)] {
        ensure(s.totals.latency_s < y.totals.latency_s, || format!("{name}: streaming {} s not below systolic {} s", s.totals.latency_s, y.totals.latency_s))?;
    }
    let (w6, w16) = (s6.totals.weight_bits, s16.totals.weight_bits);
    ensure(w6 * 16 == w16 * 6, || format!("weight bits {w6} / {w16} is not 6/16"))?;
    for (a, b) in [(&s6, &s16), (&y6, &y16)] {
        ensure(a.totals.estimated_dsp_like_units < b.totals.estimated_dsp_like_units, || "DSP-like count does not drop at 6 bits".into())?;
    }
    Ok(format!(
        "latency ms streaming {:.3} < systolic {:.3}; weight bits {w6}/{w16} = 6/16; DSP-like {} < {}",
        s6.totals.latency_s * 1e3,
        y6.totals.latency_s * 1e3,
        s6.totals.estimated_dsp_like_units,
        s16.totals.estimated_dsp_like_units
    ))
}

fn cifar_loader() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = common::rng(5);
    let records: Vec<Cifar10Record> = (0..37).map(|_| Cifar10Record { label: r.gen_range(0..10), pixels: (0..3072).map(|_| r.gen()).collect() }).collect();
    let path = dir.path().join("batch.bin");
    write_cifar10_batch(&path, &records).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    ensure(bytes.len() == 37 * 3073, || format!("{} bytes written", bytes.len()))?;
    let back = load_cifar10_batch(&path).map_err(|e| e.to_string())?;
    ensure(back == records, || "round trip changed records".into())?;
    ensure(bytes.iter().enumerate().all(|(i, &b)| b == if i % 3073 == 0 { records[i / 3073].label } else { records[i / 3073].pixels[i % 3073 - 1] }), || "byte layout".into())?;

    let truncated = parse_cifar10(&bytes[..bytes.len() - 1]);
    ensure(matches!(truncated, Err(DataError::TruncatedFile { .. })), || format!("truncated file: {truncated:?}"))?;
    let mut bad = bytes.clone();
    bad[3 * 3073] = 10;
    let bad = parse_cifar10(&bad);
    ensure(matches!(bad, Err(DataError::BadLabel { index: 3, label: 10 })), || format!("bad label: {bad:?}"))?;
    Ok("37-record batch round-trips bit-exact; truncated file and label 10 rejected".into())
}

fn qdfc(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qdfc")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("qdfc {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let backbone = resnet9_like(7);
    save_model(&backbone, &d.join("net.json"), &d.join("net.bin")).map_err(|e| e.to_string())?;
    save_model(&separable_backbone(8, 4), &d.join("sep.json"), &d.join("sep.bin")).map_err(|e| e.to_string())?;
    let (items, labels) = separable_items(8, 25, 4, 0.3, 3);
    write_features(&d.join("data"), &Dataset { items, labels }).map_err(|e| e.to_string())?;
    let spec = backbone.inputs[0].clone();
    let pixels = (0..spec.numel()).map(|i| (i % 251) as f64 / 251.0).collect();
    write_tensor(&d.join("image.bin"), &TensorValue::real(spec, pixels)).map_err(|e| e.to_string())?;

    let mut files = Vec::new();
    for run in ["a", "b"] {
        let o = d.join(run);
        std::fs::create_dir_all(&o).map_err(|e| e.to_string())?;
        let quant = "conv=s:1.5,act=u:2.2";
        qdfc(&["compile", "--graph", &s(&d.join("net.json")), "--quant", quant, "--check", "2", "--out", &s(&o.join("net"))])?;
        qdfc(&["compile", "--graph", &s(&d.join("sep.json")), "--quant", quant, "--out", &s(&o.join("sep"))])?;
        let compiled = s(&o.join("net/model.json"));
        qdfc(&["run", "--graph", &compiled, "--input", &s(&d.join("image.bin")), "--mode", "fixed", "--out", &s(&o.join("feat.bin"))])?;
        qdfc(&["run", "--graph", &s(&d.join("net.json")), "--input", &s(&d.join("image.bin")), "--mode", "float", "--out", &s(&o.join("feat_float.bin"))])?;
        qdfc(&["fsl-eval", "--graph", &s(&o.join("sep/model.json")), "--dataset", &s(&d.join("data")), "--episodes", "20", "--seed", "4", "--out", &s(&o.join("fsl.json"))])?;
        for arch in ["streaming", "systolic"] {
            qdfc(&["estimate", "--graph", &compiled, "--profile", &s(&profile_path()), "--arch", arch, "--out", &s(&o.join(format!("{arch}.json")))])?;
        }
        let mut listing: Vec<PathBuf> = walk(&o);
        listing.sort();
        files.push(listing);
    }
    let strip = |p: &Path, root: &str| p.strip_prefix(d.join(root)).unwrap().to_path_buf();
    let (a, b) = (&files[0], &files[1]);
    ensure(a.len() == b.len() && a.iter().zip(b).all(|(x, y)| strip(x, "a") == strip(y, "b")), || "different output file sets".into())?;
    for (x, y) in a.iter().zip(b) {
        let same = std::fs::read(x).map_err(|e| e.to_string())? == std::fs::read(y).map_err(|e| e.to_string())?;
        ensure(same, || format!("{} differs between runs", strip(x, "a").display()))?;
    }
    Ok(format!("compile, run, fsl-eval, estimate twice each: {} output files byte-identical", a.len()))
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("transform equivalence", transform_equivalence),
        ("MultiThreshold = quantize(relu)", multithreshold_is_quantized_relu),
        ("reduce-mean to GAP", reduce_mean_to_gap),
        ("fixed-point exhaustive", fixed_point_exhaustive),
        ("NCM oracle", ncm_oracle),
        ("synthetic few-shot", synthetic_few_shot),
        ("pipeline structure", pipeline_structure),
        ("cost-model orderings", cost_orderings),
        ("CIFAR-10 loader", cifar_loader),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail} ({secs:.2} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {why} ({secs:.2} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
