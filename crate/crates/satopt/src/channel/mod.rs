//! Downlink scene synthesis: beam geometry, antenna radiation pattern, rain
//! fading, and the link budget that turns one random scene into a concrete
//! channel gain matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod bessel;

pub use bessel::bessel_j;

/// u at the 3-dB angle of the tapered-aperture pattern; chosen so that
/// G(theta_3dB) = G_max / 2.
pub const PATTERN_U_3DB: f64 = 2.07123;

/// Linear gains below this are clamped before entering any log-domain
/// expression, and the clamp is counted in [`ChannelMatrix::clamped_gains`].
pub const GAIN_FLOOR: f64 = 1e-30;

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// All physical and solver parameters of one system instance.
///
/// Power-like fields are linear SI (watts, hertz); attenuation and antenna
/// gains stay in dB/dBi exactly as they are quoted in link budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of beams N (one user per beam).
    pub n_beams: usize,
    /// Number of subcarriers K.
    pub n_subcarriers: usize,
    /// Subcarrier bandwidth B_SC in Hz.
    pub sc_bandwidth_hz: f64,
    /// Thermal noise power sigma^2 in W (identical for every user/subcarrier).
    pub noise_power_w: f64,
    /// Per-beam transmit power limit in W.
    pub p_beam_max_w: f64,
    /// Total radiated power limit in W.
    pub p_tot_max_w: f64,
    /// Free-space path loss in dB.
    pub fspl_db: f64,
    /// Mean rain attenuation in dB.
    pub rain_mean_db: f64,
    /// Rain attenuation standard deviation in dB.
    pub rain_std_db: f64,
    /// User terminal antenna gain in dBi.
    pub user_gain_dbi: f64,
    /// Boresight satellite beam antenna gain in dBi.
    pub g_max_dbi: f64,
    /// 3-dB beamwidth angle in degrees.
    pub theta_3db_deg: f64,
    /// Beam coverage radius on the ground in km.
    pub beam_radius_km: f64,
    /// Satellite altitude in km (GEO).
    pub sat_altitude_km: f64,
    /// Carrier frequency in GHz (informational; the path loss is given
    /// directly by `fspl_db`).
    pub carrier_ghz: f64,
    /// Objective weight w in bps/W.
    pub weight_w_bps_per_watt: f64,
    /// Relative-decrease stopping tolerance of the outer loop.
    pub tolerance_eps: f64,
    /// Safety cap on outer iterations.
    pub max_outer_iters: usize,
    /// Numerical power floor in W; log-powers are boxed at log2 of this.
    pub p_floor_w: f64,
    /// ACM efficiency factor zeta in (0, 1]; 1 is pure Shannon capacity.
    pub acm_zeta: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_beams: 7,
            n_subcarriers: 4,
            sc_bandwidth_hz: 125.0e6,
            noise_power_w: db_to_linear(-124.0),
            p_beam_max_w: 100.0,
            p_tot_max_w: 500.0,
            fspl_db: 210.0,
            rain_mean_db: 2.6,
            rain_std_db: 1.63,
            user_gain_dbi: 41.7,
            g_max_dbi: 52.0,
            theta_3db_deg: 0.2,
            beam_radius_km: 150.0,
            sat_altitude_km: 35_786.0,
            carrier_ghz: 20.0,
            weight_w_bps_per_watt: 10.0e6,
            tolerance_eps: 1e-3,
            max_outer_iters: 200,
            p_floor_w: 1e-6,
            acm_zeta: 1.0,
        }
    }
}

impl SystemConfig {
    /// Check every config invariant; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be strictly positive, got {v}")))
            }
        }
        if self.n_beams == 0 {
            return Err(Error::Config("n_beams must be >= 1".into()));
        }
        if self.n_subcarriers == 0 {
            return Err(Error::Config("n_subcarriers must be >= 1".into()));
        }
        positive("sc_bandwidth_hz", self.sc_bandwidth_hz)?;
        positive("noise_power_w", self.noise_power_w)?;
        positive("p_beam_max_w", self.p_beam_max_w)?;
        positive("p_tot_max_w", self.p_tot_max_w)?;
        positive("fspl_db", self.fspl_db)?;
        positive("theta_3db_deg", self.theta_3db_deg)?;
        positive("beam_radius_km", self.beam_radius_km)?;
        positive("sat_altitude_km", self.sat_altitude_km)?;
        positive("carrier_ghz", self.carrier_ghz)?;
        positive("tolerance_eps", self.tolerance_eps)?;
        positive("p_floor_w", self.p_floor_w)?;
        if self.max_outer_iters == 0 {
            return Err(Error::Config("max_outer_iters must be >= 1".into()));
        }
        if !(self.rain_mean_db >= 0.0 && self.rain_mean_db.is_finite()) {
            return Err(Error::Config("rain_mean_db must be >= 0".into()));
        }
        if !(self.rain_std_db >= 0.0 && self.rain_std_db.is_finite()) {
            return Err(Error::Config("rain_std_db must be >= 0".into()));
        }
        if !(self.weight_w_bps_per_watt >= 0.0 && self.weight_w_bps_per_watt.is_finite()) {
            return Err(Error::Config("weight_w_bps_per_watt must be >= 0".into()));
        }
        if !self.user_gain_dbi.is_finite() || !self.g_max_dbi.is_finite() {
            return Err(Error::Config("antenna gains must be finite".into()));
        }
        if !(self.acm_zeta > 0.0 && self.acm_zeta <= 1.0) {
            return Err(Error::Config(format!(
                "acm_zeta must lie in (0, 1], got {}",
                self.acm_zeta
            )));
        }
        if self.p_floor_w * self.n_subcarriers as f64 >= self.p_beam_max_w {
            return Err(Error::Config(
                "p_floor_w * n_subcarriers must be < p_beam_max_w".into(),
            ));
        }
        Ok(())
    }

    /// Same config with a different objective weight.
    pub fn with_weight(&self, w_bps_per_watt: f64) -> Self {
        SystemConfig {
            weight_w_bps_per_watt: w_bps_per_watt,
            ..self.clone()
        }
    }
}

/// One realization of the random scene: geometry plus per-user rain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub beam_centers_km: Vec<[f64; 2]>,
    pub user_positions_km: Vec<[f64; 2]>,
    /// Per-user rain attenuation in dB, shared by every serving/interfering
    /// path towards that user.
    pub rain_atten_db: Vec<f64>,
    pub rng_seed: u64,
}

/// Linear channel power gains g[j][i][k] (transmit beam j -> user i on
/// subcarrier k) plus per-(i,k) noise powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    n_beams: usize,
    n_subcarriers: usize,
    gain: Vec<f64>,
    noise_w: Vec<f64>,
    /// Number of gains clamped at [`GAIN_FLOOR`] during construction.
    pub clamped_gains: usize,
}

impl ChannelMatrix {
    /// Build from flat arrays; `gain` is indexed `[(j * n + i) * k + sc]`,
    /// `noise_w` is indexed `[i * k + sc]`.
    pub fn new(
        n_beams: usize,
        n_subcarriers: usize,
        gain: Vec<f64>,
        noise_w: Vec<f64>,
    ) -> Result<Self> {
        if gain.len() != n_beams * n_beams * n_subcarriers {
            return Err(Error::invalid(format!(
                "gain array must have N*N*K = {} entries, got {}",
                n_beams * n_beams * n_subcarriers,
                gain.len()
            )));
        }
        if noise_w.len() != n_beams * n_subcarriers {
            return Err(Error::invalid(format!(
                "noise array must have N*K = {} entries, got {}",
                n_beams * n_subcarriers,
                noise_w.len()
            )));
        }
        if gain.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("all gains must be finite and positive"));
        }
        if noise_w.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("all noise powers must be positive"));
        }
        Ok(ChannelMatrix {
            n_beams,
            n_subcarriers,
            gain,
            noise_w,
            clamped_gains: 0,
        })
    }

    /// Frequency-flat helper: one gain per (tx, rx) pair, one noise power.
    pub fn frequency_flat(
        n_beams: usize,
        n_subcarriers: usize,
        gain_ji: &[f64],
        noise_w: f64,
    ) -> Result<Self> {
        if gain_ji.len() != n_beams * n_beams {
            return Err(Error::invalid("gain_ji must have N*N entries"));
        }
        let mut gain = Vec::with_capacity(n_beams * n_beams * n_subcarriers);
        for g in gain_ji {
            for _ in 0..n_subcarriers {
                gain.push(*g);
            }
        }
        ChannelMatrix::new(
            n_beams,
            n_subcarriers,
            gain,
            vec![noise_w; n_beams * n_subcarriers],
        )
    }

    #[inline]
    pub fn n_beams(&self) -> usize {
        self.n_beams
    }

    #[inline]
    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    /// g[j][i][k]: gain from transmit beam `j` to user `i` on subcarrier `k`.
    #[inline]
    pub fn gain(&self, j: usize, i: usize, k: usize) -> f64 {
        self.gain[(j * self.n_beams + i) * self.n_subcarriers + k]
    }

    #[inline]
    pub fn noise(&self, i: usize, k: usize) -> f64 {
        self.noise_w[i * self.n_subcarriers + k]
    }
}

/// Tapered-aperture radiation pattern
/// G(theta) = G_max * (J1(u)/(2u) + 36 J3(u)/u^3)^2 with
/// u = 2.07123 sin(theta)/sin(theta_3dB).
///
/// The u -> 0 limit of the bracket is 1/4 + 3/4 = 1, so theta = 0 returns
/// exactly `g_max_linear`.
pub fn antenna_gain(theta_rad: f64, g_max_linear: f64, theta_3db_rad: f64) -> f64 {
    let u = PATTERN_U_3DB * theta_rad.sin() / theta_3db_rad.sin();
    g_max_linear * pattern_factor(u).powi(2)
}

fn pattern_factor(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        // second-order expansion around the boresight limit
        return 1.0 - 5.0 * u * u / 64.0;
    }
    let j1 = bessel::bessel_j(1, u).expect("order 1 supported");
    let j3 = bessel::bessel_j(3, u).expect("order 3 supported");
    j1 / (2.0 * u) + 36.0 * j3 / (u * u * u)
}

/// Beam center coordinates for the supported layouts: a single boresight
/// beam, or one center beam plus a hexagonal ring at distance sqrt(3) R.
pub fn beam_layout(n_beams: usize, beam_radius_km: f64) -> Result<Vec<[f64; 2]>> {
    if !(beam_radius_km > 0.0) {
        return Err(Error::invalid("beam_radius_km must be positive"));
    }
    match n_beams {
        1 => Ok(vec![[0.0, 0.0]]),
        7 => {
            let d = 3f64.sqrt() * beam_radius_km;
            let mut centers = vec![[0.0, 0.0]];
            for sextant in 0..6 {
                let ang = (60.0 * sextant as f64).to_radians();
                centers.push([d * ang.cos(), d * ang.sin()]);
            }
            Ok(centers)
        }
        other => Err(Error::invalid(format!(
            "beam_layout supports 1 or 7 beams, got {other}"
        ))),
    }
}

/// Draw one scene: user i uniform on the closed disk around beam center i,
/// rain attenuation lognormal in dB with moments matched to the configured
/// mean and standard deviation. Deterministic for a given seed.
pub fn sample_scene(cfg: &SystemConfig, seed: u64) -> Result<Scene> {
    let centers = beam_layout(cfg.n_beams, cfg.beam_radius_km)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0).expect("unit interval");

    let (mu_ln, sigma_ln) = rain_lognormal_params(cfg.rain_mean_db, cfg.rain_std_db);

    let mut users = Vec::with_capacity(cfg.n_beams);
    let mut rain = Vec::with_capacity(cfg.n_beams);
    for center in &centers {
        let radius = cfg.beam_radius_km * unit.sample(&mut rng).sqrt();
        let angle = 2.0 * std::f64::consts::PI * unit.sample(&mut rng);
        users.push([
            center[0] + radius * angle.cos(),
            center[1] + radius * angle.sin(),
        ]);
        let z: f64 = StandardNormal.sample(&mut rng);
        let atten = if cfg.rain_mean_db <= 0.0 {
            0.0
        } else {
            (mu_ln + sigma_ln * z).exp()
        };
        rain.push(atten);
    }

    Ok(Scene {
        beam_centers_km: centers,
        user_positions_km: users,
        rain_atten_db: rain,
        rng_seed: seed,
    })
}

/// Log-domain parameters of a lognormal with the given mean and standard
/// deviation (moment inversion). A zero std collapses to the mean.
fn rain_lognormal_params(mean_db: f64, std_db: f64) -> (f64, f64) {
    if mean_db <= 0.0 {
        return (f64::NEG_INFINITY, 0.0);
    }
    if std_db == 0.0 {
        return (mean_db.ln(), 0.0);
    }
    let s2 = (1.0 + (std_db / mean_db).powi(2)).ln();
    (mean_db.ln() - s2 / 2.0, s2.sqrt())
}

/// Angle at the satellite between the directions to a beam center and to a
/// user, both on the ground plane; satellite sits at altitude `h` above the
/// origin. Exact vector angle, no small-angle approximation.
pub fn boresight_angle(sat_altitude_km: f64, beam_center_km: [f64; 2], user_km: [f64; 2]) -> f64 {
    let h = sat_altitude_km;
    let a = [beam_center_km[0], beam_center_km[1], -h];
    let b = [user_km[0], user_km[1], -h];
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Assemble the linear gain matrix from the scene:
/// g[j][i][k] = G_tx(theta_ji) * G_user / (L_fspl * A_rain_i), identical
/// across subcarriers. Gains below [`GAIN_FLOOR`] (pattern nulls) are
/// clamped and counted.
pub fn build_channel(cfg: &SystemConfig, scene: &Scene) -> ChannelMatrix {
    let n = cfg.n_beams;
    let k = cfg.n_subcarriers;
    let g_user = db_to_linear(cfg.user_gain_dbi);
    let g_max = db_to_linear(cfg.g_max_dbi);
    let fspl = db_to_linear(cfg.fspl_db);
    let theta_3db = cfg.theta_3db_deg.to_radians();

    let mut gain = vec![0.0; n * n * k];
    let mut clamped = 0usize;
    for j in 0..n {
        for i in 0..n {
            let theta = boresight_angle(
                cfg.sat_altitude_km,
                scene.beam_centers_km[j],
                scene.user_positions_km[i],
            );
            let a_rain = db_to_linear(scene.rain_atten_db[i]);
            let mut g = antenna_gain(theta, g_max, theta_3db) * g_user / (fspl * a_rain);
            if !g.is_finite() || g < GAIN_FLOOR {
                g = GAIN_FLOOR;
                clamped += 1;
            }
            for sc in 0..k {
                gain[(j * n + i) * k + sc] = g;
            }
        }
    }

    ChannelMatrix {
        n_beams: n,
        n_subcarriers: k,
        gain,
        noise_w: vec![cfg.noise_power_w; n * k],
        clamped_gains: clamped,
    }
}
