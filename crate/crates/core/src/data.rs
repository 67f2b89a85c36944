//! Grid-frequency ingestion, the day-sample pool, seeded sampling and a
//! synthetic frequency generator for tests and desk-scale studies.
//!
//! All randomness is drawn from ChaCha8 generators derived from a master
//! seed, so every sampling decision is reproducible across platforms.

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Seconds in one day.
pub const DAY_S: f64 = 86_400.0;
/// Day samples start at every quarter hour.
pub const QUARTER_S: f64 = 900.0;

/// Derive an independent, reproducible generator from a master seed.
///
/// Streams are ChaCha8 with the stream id composed from a purpose tag and
/// caller-chosen indices, so parallel consumers never share a sequence.
pub fn derive_rng(master_seed: u64, tag: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(tag);
    rng
}

/// Compose a stream tag from a purpose and two indices. The purpose sits in
/// the top byte, `major` (truncated to 24 bits) above `minor`, so distinct
/// purposes and indices never collide.
pub fn stream_tag(kind: u8, major: u32, minor: u32) -> u64 {
    (u64::from(kind) << 56) | (u64::from(major & 0x00FF_FFFF) << 32) | u64::from(minor)
}

/// A uniformly sampled frequency-deviation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    /// Epoch seconds of the first sample, when known.
    pub start_epoch_s: Option<i64>,
    /// Sample spacing, seconds.
    pub dt_s: f64,
    /// Deviation from the 50 Hz nominal, hertz.
    pub values: Vec<f64>,
}

impl FrequencyTrace {
    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 * self.dt_s
    }
}

/// How the value column of a frequency CSV is interpreted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyKind {
    /// Decide from the header name: `delta_f*` is a deviation,
    /// `frequency*` is absolute.
    #[default]
    Auto,
    /// Absolute frequency in hertz, converted to the deviation from 50 Hz.
    Absolute,
    /// Deviation from the nominal frequency in hertz.
    Deviation,
}

/// Column mapping of a frequency CSV, overridable from the configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrequencyColumns {
    /// Timestamp column name; default `timestamp`.
    pub timestamp: Option<String>,
    /// Value column name; default: first of `delta_f_hz`, `delta_f`,
    /// `frequency_hz`, `frequency`.
    pub value: Option<String>,
    #[serde(default)]
    pub kind: FrequencyKind,
}

/// Load a frequency CSV: a header row with a timestamp column (RFC 3339)
/// and a value column holding either the absolute frequency or the
/// deviation from 50 Hz, declared by name (see [`FrequencyColumns`]). The
/// source must be uniformly sampled without gaps; it is averaged down to
/// `target_dt_s` buckets.
pub fn load_frequency_csv(path: &std::path::Path, target_dt_s: f64) -> Result<FrequencyTrace> {
    load_frequency_csv_mapped(path, target_dt_s, &FrequencyColumns::default())
}

/// [`load_frequency_csv`] with an explicit column mapping.
pub fn load_frequency_csv_mapped(
    path: &std::path::Path,
    target_dt_s: f64,
    columns: &FrequencyColumns,
) -> Result<FrequencyTrace> {
    let data_err = |line: usize, message: String| CoreError::Data {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| data_err(0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let ts_name = columns.timestamp.as_deref().unwrap_or("timestamp");
    let ts_col = find(ts_name)
        .ok_or_else(|| data_err(1, format!("missing '{ts_name}' column")))?;
    let (value_col, header_absolute) = match &columns.value {
        Some(name) => (
            find(name).ok_or_else(|| data_err(1, format!("missing '{name}' column")))?,
            !name.to_ascii_lowercase().contains("delta"),
        ),
        None => {
            if let Some(c) = find("delta_f_hz").or_else(|| find("delta_f")) {
                (c, false)
            } else if let Some(c) = find("frequency_hz").or_else(|| find("frequency")) {
                (c, true)
            } else {
                return Err(data_err(
                    1,
                    "header must declare a 'frequency' or 'delta_f' column".into(),
                ));
            }
        }
    };
    let absolute = match columns.kind {
        FrequencyKind::Auto => header_absolute,
        FrequencyKind::Absolute => true,
        FrequencyKind::Deviation => false,
    };

    let mut times: Vec<i64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| data_err(line, e.to_string()))?;
        let ts_raw = record
            .get(ts_col)
            .ok_or_else(|| data_err(line, "missing timestamp field".into()))?;
        let ts = ts_raw
            .trim()
            .parse::<DateTime<Utc>>()
            .map_err(|e| data_err(line, format!("bad timestamp '{ts_raw}': {e}")))?;
        let v_raw = record
            .get(value_col)
            .ok_or_else(|| data_err(line, "missing value field".into()))?;
        let v = v_raw
            .trim()
            .parse::<f64>()
            .map_err(|e| data_err(line, format!("bad value '{v_raw}': {e}")))?;
        if !v.is_finite() {
            return Err(data_err(line, format!("non-finite value {v}")));
        }
        times.push(ts.timestamp());
        values.push(if absolute { v - 50.0 } else { v });
    }
    if values.len() < 2 {
        return Err(data_err(0, "need at least two samples".into()));
    }
    let source_dt = (times[1] - times[0]) as f64;
    if source_dt <= 0.0 {
        return Err(data_err(3, "timestamps must strictly increase".into()));
    }
    for (i, pair) in times.windows(2).enumerate() {
        let step = (pair[1] - pair[0]) as f64;
        let line = i + 3;
        if step <= 0.0 {
            return Err(data_err(line, "non-monotone timestamp".into()));
        }
        if (step - source_dt).abs() > 1e-9 {
            return Err(data_err(
                line,
                format!("gap of {step} s (expected {source_dt} s)"),
            ));
        }
    }

    let values = resample_mean(&values, source_dt, target_dt_s).map_err(|m| data_err(0, m))?;
    Ok(FrequencyTrace {
        start_epoch_s: Some(times[0]),
        dt_s: target_dt_s,
        values,
    })
}

/// Average `values` at `source_dt` into buckets of `target_dt`; the target
/// must be an integer multiple of the source. A partial trailing bucket is
/// dropped.
fn resample_mean(
    values: &[f64],
    source_dt: f64,
    target_dt: f64,
) -> std::result::Result<Vec<f64>, String> {
    if target_dt < source_dt {
        return Err(format!(
            "cannot resample {source_dt} s data up to {target_dt} s"
        ));
    }
    let ratio = target_dt / source_dt;
    if (ratio - ratio.round()).abs() > 1e-9 {
        return Err(format!(
            "target step {target_dt} s is not a multiple of the source step {source_dt} s"
        ));
    }
    let k = ratio.round() as usize;
    if k == 1 {
        return Ok(values.to_vec());
    }
    Ok(values
        .chunks_exact(k)
        .map(|chunk| chunk.iter().sum::<f64>() / k as f64)
        .collect())
}

/// Write a deviation trace back out in the ingestion format.
pub fn write_frequency_csv(path: &std::path::Path, trace: &FrequencyTrace) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| CoreError::Data {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let io_err = |e: csv::Error| CoreError::Data {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    };
    writer
        .write_record(["timestamp", "delta_f_hz"])
        .map_err(io_err)?;
    let start = trace.start_epoch_s.unwrap_or(0);
    for (i, v) in trace.values.iter().enumerate() {
        let ts = DateTime::<Utc>::from_timestamp(start + (i as f64 * trace.dt_s) as i64, 0)
            .unwrap_or_default();
        writer
            .write_record([ts.to_rfc3339(), format!("{v}")])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}

/// Load a 15-min price series: CSV with a header and `timestamp` (RFC
/// 3339) and `price_eur_mwh` (or `price`) columns. Timestamps must be
/// uniform at 900 s.
pub fn load_price_csv(path: &std::path::Path) -> Result<crate::economics::PriceSeries> {
    let data_err = |line: usize, message: String| CoreError::Data {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| data_err(0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| data_err(1, e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    };
    let ts_col = find("timestamp")
        .ok_or_else(|| data_err(1, "missing 'timestamp' column".into()))?;
    let price_col = find("price_eur_mwh")
        .or_else(|| find("price"))
        .ok_or_else(|| data_err(1, "missing 'price_eur_mwh' column".into()))?;
    let mut prev_ts: Option<i64> = None;
    let mut values = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| data_err(line, e.to_string()))?;
        let ts = record
            .get(ts_col)
            .ok_or_else(|| data_err(line, "missing timestamp".into()))?
            .trim()
            .parse::<DateTime<Utc>>()
            .map_err(|e| data_err(line, e.to_string()))?
            .timestamp();
        if let Some(prev) = prev_ts {
            if ts - prev != 900 {
                return Err(data_err(
                    line,
                    format!("price series must be uniform at 900 s, got {} s", ts - prev),
                ));
            }
        }
        prev_ts = Some(ts);
        let price = record
            .get(price_col)
            .ok_or_else(|| data_err(line, "missing price".into()))?
            .trim()
            .parse::<f64>()
            .map_err(|e| data_err(line, e.to_string()))?;
        if !price.is_finite() {
            return Err(data_err(line, "non-finite price".into()));
        }
        values.push(price);
    }
    if values.is_empty() {
        return Err(data_err(0, "empty price series".into()));
    }
    Ok(crate::economics::PriceSeries {
        step_s: 900.0,
        values,
    })
}

/// Pool of source traces sliced into one-day samples starting at every
/// quarter hour. Samples that would run past the end of their source trace
/// wrap around to its beginning, so a trace of `n` quarter hours yields
/// exactly `n` day samples.
#[derive(Debug, Clone)]
pub struct SamplePool {
    traces: Vec<FrequencyTrace>,
    dt_s: f64,
    day_len: usize,
    quarter_len: usize,
    /// Per-trace day-sample counts, cumulative.
    cum_counts: Vec<usize>,
    /// Per-trace global block offsets, cumulative.
    cum_blocks: Vec<usize>,
}

impl SamplePool {
    pub fn new(traces: Vec<FrequencyTrace>) -> Result<Self> {
        if traces.is_empty() {
            return Err(CoreError::InvalidParams("pool needs at least one trace".into()));
        }
        let dt_s = traces[0].dt_s;
        let day_len = (DAY_S / dt_s).round() as usize;
        let quarter_len = (QUARTER_S / dt_s).round() as usize;
        if (day_len as f64 * dt_s - DAY_S).abs() > 1e-9
            || (quarter_len as f64 * dt_s - QUARTER_S).abs() > 1e-9
        {
            return Err(CoreError::InvalidParams(format!(
                "dt {dt_s} s must divide both the quarter hour and the day"
            )));
        }
        let mut cum_counts = Vec::with_capacity(traces.len());
        let mut cum_blocks = Vec::with_capacity(traces.len());
        let mut count = 0usize;
        let mut blocks = 0usize;
        for trace in &traces {
            if trace.dt_s != dt_s {
                return Err(CoreError::InvalidParams(
                    "all pool traces must share the same dt".into(),
                ));
            }
            if trace.values.len() < day_len {
                return Err(CoreError::InvalidParams(
                    "each pool trace must cover at least one day".into(),
                ));
            }
            count += trace.values.len() / quarter_len;
            blocks += trace.values.len() / quarter_len;
            cum_counts.push(count);
            cum_blocks.push(blocks);
        }
        Ok(Self {
            traces,
            dt_s,
            day_len,
            quarter_len,
            cum_counts,
            cum_blocks,
        })
    }

    /// Build a pool from a bare deviation series.
    pub fn from_values(values: Vec<f64>, dt_s: f64) -> Result<Self> {
        Self::new(vec![FrequencyTrace {
            start_epoch_s: None,
            dt_s,
            values,
        }])
    }

    pub fn dt_s(&self) -> f64 {
        self.dt_s
    }

    /// Samples per day at the pool resolution.
    pub fn day_len(&self) -> usize {
        self.day_len
    }

    /// Number of available one-day samples.
    pub fn day_sample_count(&self) -> usize {
        *self.cum_counts.last().unwrap()
    }

    /// Day-sample count a trace of `duration_s` seconds would yield.
    pub fn day_sample_count_for(duration_s: f64) -> usize {
        (duration_s / QUARTER_S).floor() as usize
    }

    /// Number of full source traces (used as one-year evaluation samples).
    pub fn year_count(&self) -> usize {
        self.traces.len()
    }

    /// Full source trace by index.
    pub fn year(&self, idx: usize) -> &[f64] {
        &self.traces[idx].values
    }

    fn locate(&self, day_id: usize) -> (usize, usize) {
        let trace_idx = self
            .cum_counts
            .partition_point(|&c| c <= day_id);
        let before = if trace_idx == 0 {
            0
        } else {
            self.cum_counts[trace_idx - 1]
        };
        (trace_idx, day_id - before)
    }

    /// Copy the day sample `day_id` into `buf` (cleared first), wrapping
    /// around the source trace when it overruns the end.
    pub fn day_into(&self, day_id: usize, buf: &mut Vec<f64>) {
        assert!(day_id < self.day_sample_count(), "day id out of range");
        let (trace_idx, local) = self.locate(day_id);
        let values = &self.traces[trace_idx].values;
        let start = local * self.quarter_len;
        buf.clear();
        buf.reserve(self.day_len);
        let end = start + self.day_len;
        if end <= values.len() {
            buf.extend_from_slice(&values[start..end]);
        } else {
            buf.extend_from_slice(&values[start..]);
            buf.extend_from_slice(&values[..end - values.len()]);
        }
    }

    /// Owned copy of one day sample.
    pub fn day(&self, day_id: usize) -> Vec<f64> {
        let mut buf = Vec::new();
        self.day_into(day_id, &mut buf);
        buf
    }

    /// Global settlement-block index of the first block of a day sample,
    /// for aligning price series.
    pub fn day_block_offset(&self, day_id: usize) -> usize {
        let (trace_idx, local) = self.locate(day_id);
        let before = if trace_idx == 0 {
            0
        } else {
            self.cum_blocks[trace_idx - 1]
        };
        before + local
    }

    /// Global settlement-block index of the first block of a year trace.
    pub fn year_block_offset(&self, year_idx: usize) -> usize {
        if year_idx == 0 {
            0
        } else {
            self.cum_blocks[year_idx - 1]
        }
    }

    /// Uniform with-replacement draw of day-sample ids.
    pub fn draw_day_ids(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let count = self.day_sample_count();
        (0..n).map(|_| rng.random_range(0..count)).collect()
    }

    /// Uniform with-replacement draw of year indices.
    pub fn draw_year_ids(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let count = self.year_count();
        (0..n).map(|_| rng.random_range(0..count)).collect()
    }
}

/// Parameters of the synthetic deviation generator: a mean-reverting
/// Gaussian process clamped to a configurable band, plus rare square
/// excursions that model stress events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthFrequencyParams {
    /// Stationary standard deviation of the mean-reverting part, hertz.
    pub std_hz: f64,
    /// Correlation time of the mean reversion, seconds.
    pub correlation_time_s: f64,
    /// Hard clamp on the mean-reverting part, hertz. The default of 50 mHz
    /// keeps the background process below every emergency threshold.
    pub clamp_hz: f64,
    /// Expected number of excursion events per day.
    pub excursions_per_day: f64,
    /// Deviation level during an excursion, hertz (sign drawn at random).
    pub excursion_level_hz: f64,
    /// Excursion duration, seconds.
    pub excursion_duration_s: f64,
}

impl Default for SynthFrequencyParams {
    fn default() -> Self {
        Self {
            std_hz: 0.02,
            correlation_time_s: 60.0,
            clamp_hz: 0.05,
            excursions_per_day: 0.0,
            excursion_level_hz: 0.15,
            excursion_duration_s: 600.0,
        }
    }
}

/// Generate a synthetic deviation trace of `duration_s` seconds at `dt_s`.
pub fn synth_frequency(
    params: &SynthFrequencyParams,
    duration_s: f64,
    dt_s: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let n = (duration_s / dt_s).round() as usize;
    let phi = (-dt_s / params.correlation_time_s).exp();
    let innovation_std = params.std_hz * (1.0 - phi * phi).sqrt();
    let mut values = Vec::with_capacity(n);
    let mut x = 0.0f64;
    for _ in 0..n {
        let noise = if innovation_std > 0.0 {
            let u1: f64 = rng.random_range(1e-15..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            innovation_std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        } else {
            0.0
        };
        x = (phi * x + noise).clamp(-params.clamp_hz, params.clamp_hz);
        values.push(x);
    }
    if params.excursions_per_day > 0.0 && params.excursion_level_hz != 0.0 {
        let days = duration_s / DAY_S;
        let expected = params.excursions_per_day * days;
        // Knuth sampling of a Poisson count.
        let mut count = 0usize;
        let threshold = (-expected).exp();
        let mut p = 1.0f64;
        loop {
            p *= rng.random_range(0.0..1.0);
            if p <= threshold {
                break;
            }
            count += 1;
            if count > 10_000 {
                break;
            }
        }
        let span = (params.excursion_duration_s / dt_s).round().max(1.0) as usize;
        for _ in 0..count {
            if n == 0 {
                break;
            }
            let at = rng.random_range(0..n);
            let sign = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
            for value in values.iter_mut().skip(at).take(span) {
                *value = sign * params.excursion_level_hz;
            }
        }
    }
    values
}

/// Convenience: seeded synthetic pool covering `days` days.
pub fn synth_pool(
    params: &SynthFrequencyParams,
    days: f64,
    dt_s: f64,
    master_seed: u64,
) -> Result<SamplePool> {
    let mut rng = derive_rng(master_seed, stream_tag(0, 0, 0));
    let values = synth_frequency(params, days * DAY_S, dt_s, &mut rng);
    SamplePool::from_values(values, dt_s)
}
