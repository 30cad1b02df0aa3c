//! Privacy-budget ledger enforcing sequential composition.
//!
//! Running an ε₁-DP and an ε₂-DP computation on the same data is
//! (ε₁+ε₂)-DP, so the ledger admits a charge only while the running sum
//! stays within the total; once the budget is exhausted the ledger refuses
//! every further deduction. Deltas compose additively alongside epsilons.
//!
//! A ledger may be backed by an append-only journal file (one line per
//! entry: `query_id,epsilon,delta,timestamp`). Every accepted charge is
//! appended and flushed before it is acknowledged, so a killed run cannot
//! double-spend after restart.
//!
//! The ledger is a serialized resource: charges take `&mut self`, so
//! concurrent spenders must be totally ordered by the caller (queries may
//! run in parallel, but their charges go through one writer).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use thiserror::Error;

use crate::mechanisms::PrivacyParams;

/// Absolute tolerance at the exhaustion boundary. The budget splits used in
/// practice (0.2/11 and the like) are non-dyadic, so float dust of a few
/// ulps accumulates across a full spend-down.
pub const EXHAUSTION_TOL: f64 = 1e-12;

const HEADER_ID: &str = "ledger";

#[derive(Debug, Error)]
pub enum AccountantError {
    #[error("charge of epsilon {requested} exceeds remaining budget {remaining}")]
    BudgetExceeded { requested: f64, remaining: f64 },
    #[error("charge of delta {requested} exceeds remaining delta {remaining}")]
    DeltaExceeded { requested: f64, remaining: f64 },
    #[error("duplicate query id {0:?}")]
    DuplicateQueryId(String),
    #[error("ledger is exhausted and accepts no further charges")]
    Exhausted,
    #[error("ledger is closed and accepts no further charges")]
    Closed,
    #[error("invalid query id {0:?}: ids must be nonempty, contain no commas or newlines, and not be the reserved word \"ledger\"")]
    InvalidQueryId(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("ledger file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerState {
    Open,
    Exhausted,
    Closed,
}

/// One accepted deduction.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    pub query_id: String,
    pub spent: PrivacyParams,
    pub timestamp: String,
}

/// Remaining budget; both components are clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetRemaining {
    pub epsilon: f64,
    pub delta: f64,
}

/// Mutable account of a total (ε, δ) budget and its per-query deductions.
#[derive(Debug)]
pub struct BudgetLedger {
    total: PrivacyParams,
    entries: Vec<LedgerEntry>,
    state: LedgerState,
    journal: Option<PathBuf>,
}

impl BudgetLedger {
    /// In-memory ledger with no persistence.
    pub fn new(total: PrivacyParams) -> Self {
        Self {
            total,
            entries: Vec::new(),
            state: LedgerState::Open,
            journal: None,
        }
    }

    /// Create a fresh journal-backed ledger. Fails if the file exists.
    pub fn create(path: &Path, total: PrivacyParams) -> Result<Self, AccountantError> {
        if path.exists() {
            return Err(AccountantError::Corrupt {
                path: path.to_path_buf(),
                reason: "ledger file already exists; load it instead".into(),
            });
        }
        let header = format!(
            "{},{},{},{}\n",
            HEADER_ID,
            fmt_f64(total.epsilon()),
            fmt_f64(total.delta()),
            now_rfc3339()
        );
        write_atomic(path, header.as_bytes())?;
        Ok(Self {
            total,
            entries: Vec::new(),
            state: LedgerState::Open,
            journal: Some(path.to_path_buf()),
        })
    }

    /// Reload a journal-backed ledger, reconstructing spent budget from the
    /// entry lines.
    pub fn load(path: &Path) -> Result<Self, AccountantError> {
        let corrupt = |reason: String| AccountantError::Corrupt {
            path: path.to_path_buf(),
            reason,
        };
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| corrupt("empty ledger file".into()))?;
        let head = parse_line(header).map_err(|e| corrupt(format!("header: {e}")))?;
        if head.0 != HEADER_ID {
            return Err(corrupt(format!(
                "first line must be the ledger header, got id {:?}",
                head.0
            )));
        }
        let total = PrivacyParams::new(head.1, head.2)
            .map_err(|e| corrupt(format!("header budget: {e}")))?;

        let mut ledger = Self {
            total,
            entries: Vec::new(),
            state: LedgerState::Open,
            journal: None,
        };
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (id, eps, delta, ts) =
                parse_line(line).map_err(|e| corrupt(format!("line {}: {e}", lineno + 1)))?;
            let spent = PrivacyParams::new(eps, delta)
                .map_err(|e| corrupt(format!("line {}: {e}", lineno + 1)))?;
            ledger
                .admit(&id, spent, ts)
                .map_err(|e| corrupt(format!("line {}: {e}", lineno + 1)))?;
        }
        ledger.journal = Some(path.to_path_buf());
        Ok(ledger)
    }

    pub fn total(&self) -> PrivacyParams {
        self.total
    }

    pub fn state(&self) -> LedgerState {
        self.state
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn spent_epsilon(&self) -> f64 {
        self.entries.iter().map(|e| e.spent.epsilon()).sum()
    }

    pub fn spent_delta(&self) -> f64 {
        self.entries.iter().map(|e| e.spent.delta()).sum()
    }

    /// Total minus the sum of entries, never negative.
    pub fn remaining(&self) -> BudgetRemaining {
        BudgetRemaining {
            epsilon: (self.total.epsilon() - self.spent_epsilon()).max(0.0),
            delta: (self.total.delta() - self.spent_delta()).max(0.0),
        }
    }

    /// Permanently refuse further charges.
    pub fn close(&mut self) {
        self.state = LedgerState::Closed;
    }

    /// Deduct `cost` under `query_id`. On any refusal the ledger (and its
    /// journal) is left exactly as it was.
    pub fn charge(&mut self, query_id: &str, cost: PrivacyParams) -> Result<(), AccountantError> {
        let entry = self.check(query_id, cost)?;
        if let Some(path) = &self.journal {
            let line = format!(
                "{},{},{},{}\n",
                entry.query_id,
                fmt_f64(entry.spent.epsilon()),
                fmt_f64(entry.spent.delta()),
                entry.timestamp
            );
            let mut file = fs::OpenOptions::new().append(true).open(path)?;
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        self.push(entry);
        Ok(())
    }

    /// Validate a charge without applying it.
    fn check(&self, query_id: &str, cost: PrivacyParams) -> Result<LedgerEntry, AccountantError> {
        match self.state {
            LedgerState::Open => {}
            LedgerState::Exhausted => return Err(AccountantError::Exhausted),
            LedgerState::Closed => return Err(AccountantError::Closed),
        }
        validate_query_id(query_id)?;
        if self.entries.iter().any(|e| e.query_id == query_id) {
            return Err(AccountantError::DuplicateQueryId(query_id.to_string()));
        }
        let remaining = self.remaining();
        if cost.epsilon() > remaining.epsilon + EXHAUSTION_TOL {
            return Err(AccountantError::BudgetExceeded {
                requested: cost.epsilon(),
                remaining: remaining.epsilon,
            });
        }
        if cost.delta() > remaining.delta + EXHAUSTION_TOL {
            return Err(AccountantError::DeltaExceeded {
                requested: cost.delta(),
                remaining: remaining.delta,
            });
        }
        Ok(LedgerEntry {
            query_id: query_id.to_string(),
            spent: cost,
            timestamp: now_rfc3339(),
        })
    }

    fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
        if self.remaining().epsilon <= EXHAUSTION_TOL {
            self.state = LedgerState::Exhausted;
        }
    }

    fn admit(
        &mut self,
        query_id: &str,
        cost: PrivacyParams,
        timestamp: String,
    ) -> Result<(), AccountantError> {
        let mut entry = self.check(query_id, cost)?;
        entry.timestamp = timestamp;
        self.push(entry);
        Ok(())
    }

    /// Rewrite the journal as a compact file via write-then-rename.
    pub fn checkpoint(&self, path: &Path) -> Result<(), AccountantError> {
        let mut out = format!(
            "{},{},{},{}\n",
            HEADER_ID,
            fmt_f64(self.total.epsilon()),
            fmt_f64(self.total.delta()),
            now_rfc3339()
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.query_id,
                fmt_f64(e.spent.epsilon()),
                fmt_f64(e.spent.delta()),
                e.timestamp
            ));
        }
        write_atomic(path, out.as_bytes())?;
        Ok(())
    }
}

/// Split a total budget proportionally to positive weights: εᵢ = total·wᵢ/Σw.
///
/// The last share absorbs the floating-point remainder so the shares sum to
/// the total exactly when added left to right.
pub fn distribute(total_epsilon: f64, weights: &[f64]) -> Result<Vec<f64>, AccountantError> {
    if weights.is_empty() {
        return Err(AccountantError::InvalidWeight(
            "weight sequence must be nonempty".into(),
        ));
    }
    if !(total_epsilon.is_finite() && total_epsilon > 0.0) {
        return Err(AccountantError::InvalidWeight(format!(
            "total epsilon must be positive, got {total_epsilon}"
        )));
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            return Err(AccountantError::InvalidWeight(format!(
                "weight {i} must be positive, got {w}"
            )));
        }
    }
    let sum: f64 = weights.iter().sum();
    let mut shares: Vec<f64> = weights.iter().map(|&w| total_epsilon * w / sum).collect();
    let spent_before_last: f64 = shares[..shares.len() - 1].iter().sum();
    let last = shares.len() - 1;
    shares[last] = total_epsilon - spent_before_last;
    if shares[last] <= 0.0 {
        // Only reachable when one weight is smaller than the float dust of
        // the others' shares; such a split cannot be charged meaningfully.
        return Err(AccountantError::InvalidWeight(format!(
            "weight {last} is too small relative to the rest to receive a positive share"
        )));
    }
    Ok(shares)
}

fn validate_query_id(id: &str) -> Result<(), AccountantError> {
    if id.is_empty()
        || id == HEADER_ID
        || id.contains(',')
        || id.contains('\n')
        || id.contains('\r')
    {
        return Err(AccountantError::InvalidQueryId(id.to_string()));
    }
    Ok(())
}

fn parse_line(line: &str) -> Result<(String, f64, f64, String), String> {
    let fields: Vec<&str> = line.splitn(4, ',').collect();
    if fields.len() != 4 {
        return Err(format!(
            "expected 4 comma-separated fields, got {}",
            fields.len()
        ));
    }
    let eps: f64 = fields[1]
        .parse()
        .map_err(|e| format!("bad epsilon {:?}: {e}", fields[1]))?;
    let delta: f64 = fields[2]
        .parse()
        .map_err(|e| format!("bad delta {:?}: {e}", fields[2]))?;
    Ok((fields[0].to_string(), eps, delta, fields[3].to_string()))
}

fn fmt_f64(x: f64) -> String {
    // Round-trippable decimal form.
    format!("{x:?}")
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "ledger".into()),
        std::process::id()
    ));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_data()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pure(eps: f64) -> PrivacyParams {
        PrivacyParams::pure(eps).unwrap()
    }

    #[test]
    fn eleven_mean_query_charges_exhaust_the_report_budget() {
        let mut ledger = BudgetLedger::new(pure(0.2));
        let share = 0.2 / 11.0;
        for i in 0..11 {
            ledger.charge(&format!("mean-{i}"), pure(share)).unwrap();
        }
        assert!(ledger.remaining().epsilon <= EXHAUSTION_TOL);
        assert_eq!(ledger.state(), LedgerState::Exhausted);
        assert!(matches!(
            ledger.charge("one-more", pure(share)),
            Err(AccountantError::Exhausted)
        ));
    }

    #[test]
    fn over_budget_charge_is_refused_and_harmless() {
        let mut ledger = BudgetLedger::new(pure(0.2));
        let err = ledger.charge("big", pure(0.3)).unwrap_err();
        assert!(matches!(err, AccountantError::BudgetExceeded { .. }));
        assert_eq!(ledger.remaining().epsilon, 0.2);
        assert!(ledger.entries().is_empty());
        assert_eq!(ledger.state(), LedgerState::Open);
    }

    #[test]
    fn three_report_charges_spend_a_point_six_budget() {
        let mut ledger = BudgetLedger::new(pure(0.6));
        ledger.charge("means", pure(0.2)).unwrap();
        ledger.charge("medians", pure(0.2)).unwrap();
        ledger.charge("histograms", pure(0.2)).unwrap();
        assert!(ledger.remaining().epsilon <= EXHAUSTION_TOL);
        assert_eq!(ledger.state(), LedgerState::Exhausted);
    }

    #[test]
    fn duplicate_query_id_is_refused() {
        let mut ledger = BudgetLedger::new(pure(1.0));
        ledger.charge("q", pure(0.1)).unwrap();
        assert!(matches!(
            ledger.charge("q", pure(0.1)),
            Err(AccountantError::DuplicateQueryId(_))
        ));
        assert_eq!(ledger.entries().len(), 1);
    }

    #[test]
    fn query_id_charset_is_validated() {
        let mut ledger = BudgetLedger::new(pure(1.0));
        assert!(matches!(
            ledger.charge("a,b", pure(0.1)),
            Err(AccountantError::InvalidQueryId(_))
        ));
        assert!(ledger.charge("", pure(0.1)).is_err());
        assert!(ledger.charge("ledger", pure(0.1)).is_err());
    }

    #[test]
    fn remaining_tracks_charges() {
        let mut ledger = BudgetLedger::new(pure(0.6));
        assert_eq!(ledger.remaining().epsilon, 0.6);
        ledger.charge("a", pure(0.2)).unwrap();
        assert!((ledger.remaining().epsilon - 0.4).abs() < 1e-15);
    }

    #[test]
    fn closed_ledger_refuses() {
        let mut ledger = BudgetLedger::new(pure(1.0));
        ledger.close();
        assert!(matches!(
            ledger.charge("q", pure(0.1)),
            Err(AccountantError::Closed)
        ));
    }

    #[test]
    fn delta_composes_additively() {
        let total = PrivacyParams::new(1.0, 1e-5).unwrap();
        let mut ledger = BudgetLedger::new(total);
        ledger
            .charge("a", PrivacyParams::new(0.4, 4e-6).unwrap())
            .unwrap();
        ledger
            .charge("b", PrivacyParams::new(0.4, 4e-6).unwrap())
            .unwrap();
        let err = ledger
            .charge("c", PrivacyParams::new(0.1, 5e-6).unwrap())
            .unwrap_err();
        assert!(matches!(err, AccountantError::DeltaExceeded { .. }));
        assert!((ledger.remaining().delta - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn distribute_equal_splits() {
        let eleven = distribute(0.2, &[1.0; 11]).unwrap();
        assert_eq!(eleven.len(), 11);
        for share in &eleven {
            assert!((share - 0.2 / 11.0).abs() < 1e-15);
        }
        let total: f64 = eleven.iter().sum();
        assert_eq!(total, 0.2);

        let fourteen = distribute(0.2, &[1.0; 14]).unwrap();
        for share in &fourteen {
            assert!((share - 0.2 / 14.0).abs() < 1e-15);
        }
        assert_eq!(fourteen.iter().sum::<f64>(), 0.2);
    }

    #[test]
    fn distribute_proportional() {
        let shares = distribute(1.0, &[1.0, 3.0]).unwrap();
        assert_eq!(shares, vec![0.25, 0.75]);
    }

    #[test]
    fn distribute_rejects_bad_weights() {
        assert!(distribute(1.0, &[]).is_err());
        assert!(distribute(1.0, &[1.0, 0.0]).is_err());
        assert!(distribute(1.0, &[1.0, -2.0]).is_err());
        assert!(distribute(0.0, &[1.0]).is_err());
    }

    #[test]
    fn journal_roundtrip_prevents_double_spend() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spend.ledger");
        {
            let mut ledger = BudgetLedger::create(&path, pure(0.6)).unwrap();
            ledger.charge("means", pure(0.2)).unwrap();
            ledger.charge("medians", pure(0.2)).unwrap();
            // Dropped without checkpoint: the appended lines must survive.
        }
        let mut reloaded = BudgetLedger::load(&path).unwrap();
        assert_eq!(reloaded.entries().len(), 2);
        assert!((reloaded.remaining().epsilon - 0.2).abs() < 1e-15);
        // Spending the rest exhausts it.
        reloaded.charge("histograms", pure(0.2)).unwrap();
        assert_eq!(reloaded.state(), LedgerState::Exhausted);

        let again = BudgetLedger::load(&path).unwrap();
        assert_eq!(again.state(), LedgerState::Exhausted);
        assert_eq!(again.remaining().epsilon, 0.0);
    }

    #[test]
    fn create_refuses_existing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ledger");
        BudgetLedger::create(&path, pure(1.0)).unwrap();
        assert!(BudgetLedger::create(&path, pure(1.0)).is_err());
    }

    #[test]
    fn checkpoint_writes_equivalent_ledger() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ledger");
        let copy = dir.path().join("b.ledger");
        let mut ledger = BudgetLedger::create(&path, pure(0.6)).unwrap();
        ledger.charge("q1", pure(0.25)).unwrap();
        ledger.checkpoint(&copy).unwrap();
        let reloaded = BudgetLedger::load(&copy).unwrap();
        assert_eq!(reloaded.entries().len(), 1);
        assert_eq!(reloaded.entries()[0].query_id, "q1");
        assert!((reloaded.remaining().epsilon - 0.35).abs() < 1e-15);
    }

    #[test]
    fn load_rejects_overspent_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ledger");
        std::fs::write(
            &path,
            "ledger,0.2,0.0,2026-01-01T00:00:00Z\nq1,0.5,0.0,2026-01-01T00:00:01Z\n",
        )
        .unwrap();
        assert!(matches!(
            BudgetLedger::load(&path),
            Err(AccountantError::Corrupt { .. })
        ));
    }
}
