//! Fixed-point formats: ranges, half-up rounding, saturation, products and
//! the threshold ladder that realizes a quantized Relu.

use qdfc::fixed::{accumulator_width, fx_mul, quantize, QFormat, Rounding};
use qdfc::transforms::relu_thresholds;

fn main() -> anyhow::Result<()> {
    for name in ["u:2.2", "s:1.5", "s:1.15", "u:8.8"] {
        let fmt: QFormat = name.parse()?;
        println!(
            "{fmt:<7} {:>2} bits  step {:<12} range [{}, {}]",
            fmt.total_bits(),
            fmt.step(),
            fmt.min_value(),
            fmt.max_value()
        );
    }

    let act: QFormat = "u:2.2".parse()?;
    for x in [0.1, 0.125, 0.37, 2.0, 3.9, 7.0, -1.0] {
        println!("quantize({x:>5}) -> {}", quantize(x, act, Rounding::HalfUp));
    }

    let w: QFormat = "s:1.5".parse()?;
    let a = quantize(0.75, act, Rounding::HalfUp);
    let b = quantize(-0.40625, w, Rounding::HalfUp);
    println!("{a} * {b} = {}", fx_mul(a, b, QFormat::signed(2, 5)?));
    println!("summing 3x3x64 {act} values exactly needs {} bits", accumulator_width(act, 9 * 64));

    println!("relu ladder for {act}: {:?}", relu_thresholds(act));
    Ok(())
}
