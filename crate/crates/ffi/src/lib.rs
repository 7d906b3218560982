//! C ABI for the hybrid-v2x simulator.
//!
//! Configurations and Q-networks are opaque handles created and freed by this
//! library. Every function returns an [`HvStatus`]; on failure the message is
//! available from [`hv_last_error_message`] on the same thread. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use hybrid_v2x::agent::{build_state, greedy_action, AppRequirements, STATE_DIM};
use hybrid_v2x::baselines::{topsis_rank, CriterionSense, Selector, TopsisInput};
use hybrid_v2x::config::{parse_config, Congestion, Overrides, RunConfig};
use hybrid_v2x::engine::{run_evaluation, run_training, save_agents, selector_policy, Aggregate};
use hybrid_v2x::hybrid::{prr_game, CommMode};
use hybrid_v2x::nn::Mlp;
use hybrid_v2x::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Weights = 5,
    Fault = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvSelector {
    Drl = 0,
    StaticG5 = 1,
    StaticLte = 2,
    StaticRedundant = 3,
    Topsis = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvCongestion {
    Low = 0,
    High = 1,
}

/// Aggregate of a set of games. `mode_pct` is indexed by mode code:
/// 0 single ITS-G5, 1 single LTE, 2 redundant, 3 division.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HvSummary {
    pub games: u32,
    pub mean_prr: f64,
    pub std_prr: f64,
    pub mean_reward: f64,
    pub dup_pct: f64,
    pub mode_pct: [f64; 4],
}

/// Opaque run configuration.
pub struct HvConfig {
    inner: RunConfig,
}

/// Opaque trained Q-network.
pub struct HvQNetwork {
    inner: Mlp,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (HvStatus, String);

fn status_of(e: &Error) -> HvStatus {
    match e {
        Error::Config(_) => HvStatus::Config,
        Error::Io(_) => HvStatus::Io,
        Error::Weights(_) => HvStatus::Weights,
        Error::Input(_) | Error::Shape(_) | Error::UnknownVehicle(_) => HvStatus::InvalidArgument,
        _ => HvStatus::Fault,
    }
}

fn fail(e: Error) -> Failure {
    (status_of(&e), e.to_string())
}

fn set_error(msg: Option<String>) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = msg.map(|m| CString::new(m.replace('\0', " ")).unwrap_or_default());
    });
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            HvStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(Some(msg));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            HvStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err((HvStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    non_null(p, name)?;
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (HvStatus::InvalidArgument, format!("{name} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn selector_of(s: HvSelector) -> Selector {
    match s {
        HvSelector::Drl => Selector::Drl,
        HvSelector::StaticG5 => Selector::StaticG5,
        HvSelector::StaticLte => Selector::StaticLte,
        HvSelector::StaticRedundant => Selector::StaticRedundant,
        HvSelector::Topsis => Selector::Topsis,
    }
}

fn summary_of(a: &Aggregate) -> HvSummary {
    HvSummary {
        games: a.games as u32,
        mean_prr: a.mean_prr,
        std_prr: a.std_prr,
        mean_reward: a.mean_reward,
        dup_pct: a.dup_pct,
        mode_pct: a.mode_pct,
    }
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hv_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration. Never null; release with [`hv_config_free`].
#[no_mangle]
pub extern "C" fn hv_config_default() -> *mut HvConfig {
    Box::into_raw(Box::new(HvConfig {
        inner: RunConfig::default(),
    }))
}

/// Parses a TOML configuration file into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_config_from_file(path: *const c_char, out: *mut *mut HvConfig) -> HvStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path, "path")?;
        let cfg = parse_config(Some(&path), &Overrides::default()).map_err(fail)?;
        *out = Box::into_raw(Box::new(HvConfig { inner: cfg }));
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn hv_config_free(cfg: *mut HvConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

unsafe fn config_mut<'a>(cfg: *mut HvConfig) -> Result<&'a mut RunConfig, Failure> {
    non_null(cfg, "config")?;
    Ok(&mut (*cfg).inner)
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hv_config_set_seed(cfg: *mut HvConfig, seed: u64) -> HvStatus {
    guard(|| {
        config_mut(cfg)?.seed = seed;
        Ok(())
    })
}

/// Sets the training game count.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hv_config_set_games(cfg: *mut HvConfig, games: u32) -> HvStatus {
    guard(|| {
        if games == 0 {
            return Err((HvStatus::InvalidArgument, "games must be >= 1".into()));
        }
        config_mut(cfg)?.games = games as usize;
        Ok(())
    })
}

/// Applies a background-traffic preset.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hv_config_set_congestion(cfg: *mut HvConfig, level: HvCongestion) -> HvStatus {
    guard(|| {
        let c = match level {
            HvCongestion::Low => Congestion::Low,
            HvCongestion::High => Congestion::High,
        };
        let cfg = config_mut(cfg)?;
        *cfg = cfg.with_congestion(c);
        Ok(())
    })
}

/// Plays `games` evaluation games with a selector. `weights_dir` holds
/// `weights-agent<k>.bin` files and may be null for non-DRL selectors.
///
/// # Safety
/// `cfg` must be a live handle, `weights_dir` null or a NUL-terminated
/// string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_evaluate(
    cfg: *const HvConfig,
    selector: HvSelector,
    weights_dir: *const c_char,
    games: u32,
    out: *mut HvSummary,
) -> HvStatus {
    guard(|| {
        non_null(cfg, "config")?;
        non_null(out, "out")?;
        if games == 0 {
            return Err((HvStatus::InvalidArgument, "games must be >= 1".into()));
        }
        let run = &(*cfg).inner;
        let selector = selector_of(selector);
        let dir = if weights_dir.is_null() {
            if selector == Selector::Drl {
                return Err((HvStatus::NullPointer, "weights_dir is required for the drl selector".into()));
            }
            PathBuf::new()
        } else {
            path_arg(weights_dir, "weights_dir")?
        };
        let policy = selector_policy(run, selector, &dir).map_err(fail)?;
        let (_, agg) = run_evaluation(run, policy, games as usize).map_err(fail)?;
        *out = summary_of(&agg);
        Ok(())
    })
}

/// Trains agents for the configured number of games and writes their
/// weights into `out_dir`, which must exist.
///
/// # Safety
/// `cfg` must be a live handle, `out_dir` a NUL-terminated string, `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_train(cfg: *const HvConfig, out_dir: *const c_char, out: *mut HvSummary) -> HvStatus {
    guard(|| {
        non_null(cfg, "config")?;
        non_null(out, "out")?;
        let dir = path_arg(out_dir, "out_dir")?;
        let (games, agents) = run_training(&(*cfg).inner, |_| Ok(())).map_err(fail)?;
        save_agents(&agents, &dir).map_err(fail)?;
        *out = summary_of(&Aggregate::from_games(&games));
        Ok(())
    })
}

fn load_network(path: &Path) -> Result<Mlp, Failure> {
    let file = File::open(path).map_err(|e| (HvStatus::Io, format!("{}: {e}", path.display())))?;
    let net = Mlp::read_from(BufReader::new(file)).map_err(fail)?;
    if net.in_dim() != STATE_DIM || net.out_dim() != CommMode::COUNT {
        return Err((
            HvStatus::Weights,
            format!("network maps {} inputs to {} outputs", net.in_dim(), net.out_dim()),
        ));
    }
    Ok(net)
}

/// Loads a weight file written by training.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_qnet_load(path: *const c_char, out: *mut *mut HvQNetwork) -> HvStatus {
    guard(|| {
        non_null(out, "out")?;
        let net = load_network(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(HvQNetwork { inner: net }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`hv_qnet_load`] and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn hv_qnet_free(net: *mut HvQNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

unsafe fn q_values(net: *const HvQNetwork, state: *const f64) -> Result<Vec<f64>, Failure> {
    non_null(net, "network")?;
    non_null(state, "state")?;
    let s = std::slice::from_raw_parts(state, STATE_DIM);
    (*net).inner.forward(s).map_err(fail)
}

/// Writes the 4 Q-values of a 6-feature state.
///
/// # Safety
/// `state` must point to 6 doubles and `out` to room for 4.
#[no_mangle]
pub unsafe extern "C" fn hv_qnet_q_values(net: *const HvQNetwork, state: *const f64, out: *mut f64) -> HvStatus {
    guard(|| {
        non_null(out, "out")?;
        let q = q_values(net, state)?;
        ptr::copy_nonoverlapping(q.as_ptr(), out, q.len());
        Ok(())
    })
}

/// Greedy mode code (0-3) for a 6-feature state.
///
/// # Safety
/// `state` must point to 6 doubles and `out_mode` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_qnet_select(net: *const HvQNetwork, state: *const f64, out_mode: *mut u8) -> HvStatus {
    guard(|| {
        non_null(out_mode, "out_mode")?;
        let q = q_values(net, state)?;
        *out_mode = greedy_action(&q).map_err(fail)? as u8;
        Ok(())
    })
}

/// Builds the 6-feature agent state. NaN SNIR or PRR inputs mean "not
/// observed yet" and map to the neutral feature value.
///
/// # Safety
/// `out` must have room for 6 doubles.
#[no_mangle]
pub unsafe extern "C" fn hv_build_state(
    snir_g5_db: f64,
    snir_lte_db: f64,
    prr_g5: f64,
    prr_lte: f64,
    latency_ms: f64,
    reliability: f64,
    out: *mut f64,
) -> HvStatus {
    guard(|| {
        non_null(out, "out")?;
        let opt = |x: f64| if x.is_nan() { None } else { Some(x) };
        let req = AppRequirements {
            latency_ms,
            reliability,
        };
        req.validate().map_err(fail)?;
        let s = build_state([opt(snir_g5_db), opt(snir_lte_db)], [opt(prr_g5), opt(prr_lte)], &req).map_err(fail)?;
        ptr::copy_nonoverlapping(s.0.as_ptr(), out, STATE_DIM);
        Ok(())
    })
}

/// TOPSIS closeness. `matrix` is row-major `alternatives x criteria`;
/// `benefit[j]` is non-zero for benefit criteria and zero for cost
/// criteria; `out` receives one value per alternative.
///
/// # Safety
/// All pointers must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn hv_topsis_rank(
    matrix: *const f64,
    alternatives: usize,
    criteria: usize,
    weights: *const f64,
    benefit: *const u8,
    out: *mut f64,
) -> HvStatus {
    guard(|| {
        non_null(matrix, "matrix")?;
        non_null(weights, "weights")?;
        non_null(benefit, "benefit")?;
        non_null(out, "out")?;
        let input = TopsisInput {
            matrix: std::slice::from_raw_parts(matrix, alternatives * criteria).to_vec(),
            alternatives,
            weights: std::slice::from_raw_parts(weights, criteria).to_vec(),
            senses: std::slice::from_raw_parts(benefit, criteria)
                .iter()
                .map(|&b| if b != 0 { CriterionSense::Benefit } else { CriterionSense::Cost })
                .collect(),
        };
        let c = topsis_rank(&input).map_err(fail)?;
        ptr::copy_nonoverlapping(c.as_ptr(), out, c.len());
        Ok(())
    })
}

/// Per-game packet reception ratio: SR target over messages sent.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hv_prr_game(sr_target: u32, n_sent: u64, out: *mut f64) -> HvStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = prr_game(sr_target, n_sent).map_err(fail)?;
        Ok(())
    })
}
