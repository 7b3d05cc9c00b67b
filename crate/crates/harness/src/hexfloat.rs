//! Exact text encoding of `f64` as C99-style hexadecimal floats
//! (`0x1.8p+1`, `-0x0.0000000000001p-1022`, `inf`, `nan`).

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed hex float {0:?}")]
pub struct HexFloatError(pub String);

pub fn format(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = bits & ((1u64 << 52) - 1);
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let digits = format!("{mant:013x}");
    let digits = digits.trim_end_matches('0');
    let frac = if digits.is_empty() { String::new() } else { format!(".{digits}") };
    format!("{sign}0x{lead}{frac}p{e:+}")
}

pub fn parse(s: &str) -> Result<f64, HexFloatError> {
    let err = || HexFloatError(s.to_string());
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let (negative, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x").ok_or_else(err)?;
    let (mantissa, exponent) = rest.split_once('p').ok_or_else(err)?;
    let (lead, frac) = match mantissa.split_once('.') {
        Some((l, f)) if !f.is_empty() => (l, f),
        Some(_) => return Err(err()),
        None => (mantissa, ""),
    };
    if frac.len() > 13 || !frac.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
        return Err(err());
    }
    if !exponent.starts_with(['+', '-']) {
        return Err(err());
    }
    let e: i64 = exponent.parse().map_err(|_| err())?;
    let mant = if frac.is_empty() { 0 } else { u64::from_str_radix(&format!("{frac:0<13}"), 16).map_err(|_| err())? };
    let sign_bit = u64::from(negative) << 63;
    let bits = match lead {
        "1" if (-1022..=1023).contains(&e) => sign_bit | (((e + 1023) as u64) << 52) | mant,
        "0" if mant == 0 && e == 0 => sign_bit,
        "0" if e == -1022 => sign_bit | mant,
        _ => return Err(err()),
    };
    Ok(f64::from_bits(bits))
}
