//! Level-1 limit order book events: parsing, validation and a seeded
//! synthetic stream generator.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact CSV header of a LOB stream file.
pub const LOB_CSV_HEADER: [&str; 6] = ["seq", "ts", "ask_px", "ask_vol", "bid_px", "bid_vol"];

/// One best-level snapshot of the book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobEvent {
    pub seq: u64,
    /// Opaque timestamp, kept for indexing only.
    pub timestamp: Option<String>,
    pub ask_price: f64,
    pub ask_volume: f64,
    pub bid_price: f64,
    pub bid_volume: f64,
}

impl LobEvent {
    pub fn new(seq: u64, ask_price: f64, ask_volume: f64, bid_price: f64, bid_volume: f64) -> Self {
        Self {
            seq,
            timestamp: None,
            ask_price,
            ask_volume,
            bid_price,
            bid_volume,
        }
    }

    pub fn mid_price(&self) -> f64 {
        mid_price(self)
    }

    pub fn spread(&self) -> f64 {
        self.ask_price - self.bid_price
    }

    pub fn is_crossed(&self) -> bool {
        self.bid_price > self.ask_price
    }

    /// Checks the per-event invariants (finite, strictly positive, not crossed).
    /// `row` is only used to label errors.
    pub fn validate(&self, row: usize) -> Result<()> {
        self.validate_values(row)?;
        if self.is_crossed() {
            return Err(Error::CrossedBook {
                row,
                bid: self.bid_price,
                ask: self.ask_price,
            });
        }
        Ok(())
    }

    fn validate_values(&self, row: usize) -> Result<()> {
        let fields = [
            ("ask_px", self.ask_price),
            ("ask_vol", self.ask_volume),
            ("bid_px", self.bid_price),
            ("bid_vol", self.bid_volume),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositive { row, field, value });
            }
        }
        Ok(())
    }
}

/// Average of the best bid and ask.
pub fn mid_price(event: &LobEvent) -> f64 {
    (event.ask_price + event.bid_price) / 2.0
}

/// How invalid rows are treated while parsing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvalidRowPolicy {
    /// Any invalid row aborts parsing.
    #[default]
    Reject,
    /// Invalid rows are dropped.
    Skip,
    /// Crossed books are kept; other invalid rows are dropped. Both are logged.
    Warn,
}

impl std::str::FromStr for InvalidRowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reject" => Ok(Self::Reject),
            "skip" => Ok(Self::Skip),
            "warn" => Ok(Self::Warn),
            other => Err(Error::InvalidConfig(format!("unknown row policy `{other}`"))),
        }
    }
}

fn parse_field(raw: &str, row: usize, field: &'static str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::MalformedField {
        row,
        field,
        value: raw.to_string(),
    })
}

/// Parses a LOB CSV stream (see [`LOB_CSV_HEADER`]). Rows are numbered from 0
/// in error messages. An empty `seq` cell continues the numbering from the
/// previous event (starting at 0).
pub fn parse_lob_csv<R: Read>(reader: R, policy: InvalidRowPolicy) -> Result<Vec<LobEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok(Vec::new()),
        Some(h) => h?,
    };
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != LOB_CSV_HEADER {
        return Err(Error::BadHeader {
            expected: LOB_CSV_HEADER.join(","),
            found: found.join(","),
        });
    }

    let mut events: Vec<LobEvent> = Vec::new();
    for (row, record) in records.enumerate() {
        let record = record?;
        let previous = events.last().map(|e| e.seq);
        match parse_row(&record, row, previous) {
            Ok(event) if event.is_crossed() => {
                let err = Error::CrossedBook {
                    row,
                    bid: event.bid_price,
                    ask: event.ask_price,
                };
                match policy {
                    InvalidRowPolicy::Reject => return Err(err),
                    InvalidRowPolicy::Skip => log::debug!("skipping {err}"),
                    InvalidRowPolicy::Warn => {
                        log::warn!("keeping {err}");
                        events.push(event);
                    }
                }
            }
            Ok(event) => events.push(event),
            Err(err) => match policy {
                InvalidRowPolicy::Reject => return Err(err),
                InvalidRowPolicy::Skip => log::debug!("skipping {err}"),
                InvalidRowPolicy::Warn => log::warn!("skipping {err}"),
            },
        }
    }
    Ok(events)
}

fn parse_row(record: &csv::StringRecord, row: usize, previous: Option<u64>) -> Result<LobEvent> {
    if record.len() != LOB_CSV_HEADER.len() {
        return Err(Error::MalformedField {
            row,
            field: "row",
            value: record.iter().collect::<Vec<_>>().join(","),
        });
    }
    let seq_raw = record[0].trim();
    let seq = if seq_raw.is_empty() {
        previous.map_or(0, |p| p + 1)
    } else {
        seq_raw.parse::<u64>().map_err(|_| Error::MalformedField {
            row,
            field: "seq",
            value: seq_raw.to_string(),
        })?
    };
    if let Some(previous) = previous {
        if seq <= previous {
            return Err(Error::NonMonotoneSeq { row, seq, previous });
        }
    }
    let ts = record[1].trim();
    let event = LobEvent {
        seq,
        timestamp: (!ts.is_empty()).then(|| ts.to_string()),
        ask_price: parse_field(&record[2], row, "ask_px")?,
        ask_volume: parse_field(&record[3], row, "ask_vol")?,
        bid_price: parse_field(&record[4], row, "bid_px")?,
        bid_volume: parse_field(&record[5], row, "bid_vol")?,
    };
    event.validate_values(row)?;
    Ok(event)
}

/// Writes events in the schema read by [`parse_lob_csv`]. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_lob_csv<W: Write>(writer: W, events: &[LobEvent]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    wtr.write_record(LOB_CSV_HEADER)?;
    for e in events {
        wtr.write_record([
            e.seq.to_string(),
            e.timestamp.clone().unwrap_or_default(),
            e.ask_price.to_string(),
            e.ask_volume.to_string(),
            e.bid_price.to_string(),
            e.bid_volume.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parameters of the mean-reverting synthetic book.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStreamConfig {
    pub n_events: usize,
    pub mid0: f64,
    /// Per-event pull towards `mid0`, in `[0, 1)`.
    pub reversion_rate: f64,
    /// Standard deviation of the per-event mid innovation.
    pub volatility: f64,
    pub spread_mean: f64,
    pub tick_size: f64,
    /// Inclusive bounds for uniformly drawn volumes.
    pub volume_range: (u64, u64),
    pub seed: u64,
}

impl Default for SyntheticStreamConfig {
    fn default() -> Self {
        Self {
            n_events: 10_000,
            mid0: 100.0,
            reversion_rate: 0.05,
            volatility: 0.05,
            spread_mean: 0.02,
            tick_size: 0.01,
            volume_range: (1, 500),
            seed: 0,
        }
    }
}

impl SyntheticStreamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_events == 0 {
            return bad("n_events must be positive".into());
        }
        if !(self.mid0.is_finite() && self.mid0 > 0.0) {
            return bad(format!("mid0 must be positive, got {}", self.mid0));
        }
        if !(0.0..1.0).contains(&self.reversion_rate) {
            return bad(format!("reversion_rate must lie in [0,1), got {}", self.reversion_rate));
        }
        if !(self.volatility.is_finite() && self.volatility >= 0.0) {
            return bad(format!("volatility must be non-negative, got {}", self.volatility));
        }
        if !(self.tick_size.is_finite() && self.tick_size > 0.0) {
            return bad(format!("tick_size must be positive, got {}", self.tick_size));
        }
        if !(self.spread_mean.is_finite() && self.spread_mean >= self.tick_size) {
            return bad(format!(
                "spread_mean {} is below tick_size {}",
                self.spread_mean, self.tick_size
            ));
        }
        let (lo, hi) = self.volume_range;
        if lo == 0 || lo > hi {
            return bad(format!("volume_range must satisfy 1 <= min <= max, got [{lo},{hi}]"));
        }
        Ok(())
    }

    /// Spread actually quoted: `spread_mean` rounded to whole ticks, at least one tick.
    pub fn quoted_spread(&self) -> f64 {
        (self.spread_mean / self.tick_size).round().max(1.0) * self.tick_size
    }

    /// Generator for the innovations `z_t`. Stream 0 of the seeded ChaCha8
    /// generator; volumes come from stream 1 so the price path does not
    /// depend on the volume range.
    pub fn noise_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0);
        rng
    }

    fn volume_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        rng
    }
}

/// Generates a mean-reverting best-level stream:
/// `x_{t+1} = x_t + reversion_rate * (mid0 - x_t) + volatility * z_t`,
/// quoted at `round(x_t / tick) * tick` with a constant whole-tick spread.
pub fn generate_synthetic_stream(config: &SyntheticStreamConfig) -> Result<Vec<LobEvent>> {
    config.validate()?;
    let mut noise = config.noise_rng();
    let mut volumes = config.volume_rng();
    let half_spread = config.quoted_spread() / 2.0;
    let (vlo, vhi) = config.volume_range;

    let mut latent = config.mid0;
    let mut events = Vec::with_capacity(config.n_events);
    for seq in 0..config.n_events {
        if seq > 0 {
            let z: f64 = noise.sample(StandardNormal);
            latent += config.reversion_rate * (config.mid0 - latent) + config.volatility * z;
        }
        let mid = (latent / config.tick_size).round() * config.tick_size;
        let event = LobEvent::new(
            seq as u64,
            mid + half_spread,
            volumes.random_range(vlo..=vhi) as f64,
            mid - half_spread,
            volumes.random_range(vlo..=vhi) as f64,
        );
        event.validate(seq)?;
        events.push(event);
    }
    Ok(events)
}
