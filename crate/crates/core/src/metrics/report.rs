use serde::{Deserialize, Serialize};

use super::{fit_power_law, MetricsReport, PowerLawFit, SHARE_SUM_TOLERANCE};
use crate::error::{Error, Result};

/// One value per source, serialised with named fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerSource<T> {
    pub contouring: T,
    pub link: T,
    pub motion: T,
    pub thermal: T,
    pub dynamic: T,
}

impl<T: Copy> PerSource<T> {
    pub fn from_array(v: [T; 5]) -> Self {
        Self {
            contouring: v[0],
            link: v[1],
            motion: v[2],
            thermal: v[3],
            dynamic: v[4],
        }
    }

    /// Panics unless `v` has five entries.
    pub(crate) fn from_slice(v: &[T]) -> Self {
        Self::from_array([v[0], v[1], v[2], v[3], v[4]])
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.contouring, self.link, self.motion, self.thermal, self.dynamic]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub feed_rate_mm_min: f64,
    pub shares_percent: PerSource<f64>,
    pub sum_percent: f64,
}

impl ShareRow {
    pub fn new(feed_rate_mm_min: f64, shares: [f64; 5]) -> Self {
        Self {
            feed_rate_mm_min,
            shares_percent: PerSource::from_array(shares),
            sum_percent: shares.iter().sum(),
        }
    }

    /// Whether the five shares add up to 100 within
    /// [`SHARE_SUM_TOLERANCE`] (plus rounding slack).
    pub fn sums_to_100(&self) -> bool {
        (self.sum_percent - 100.0).abs() <= SHARE_SUM_TOLERANCE + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiStaticMaxima {
    pub link_um: [f64; 3],
    pub motion_um: [f64; 3],
    pub thermal_um: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContouringDynamicRow {
    pub feed_rate_mm_min: f64,
    pub contouring_max_um: [f64; 3],
    pub dynamic_max_um: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRmsRow {
    pub feed_rate_mm_min: f64,
    pub dynamic_rms_um: [f64; 3],
}

/// Campaign-level tables: shares per feed, quasi-static maxima, contouring
/// and dynamic maxima per feed, dynamic RMS per feed and its power law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub shares: Vec<ShareRow>,
    pub quasi_static_max: QuasiStaticMaxima,
    pub contouring_dynamic_max: Vec<ContouringDynamicRow>,
    pub dynamic_rms: Vec<DynamicRmsRow>,
    pub power_law: Option<PowerLawFit>,
    pub warnings: Vec<String>,
    pub sessions: Vec<MetricsReport>,
}

fn sup(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])]
}

impl CampaignReport {
    /// Aggregates session reports, sorted by feed rate. The power law is
    /// fitted when at least two distinct feeds are present.
    pub fn build(mut sessions: Vec<MetricsReport>) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::invalid("a report needs at least one session"));
        }
        sessions.sort_by(|a, b| {
            a.feed_rate_mm_min
                .total_cmp(&b.feed_rate_mm_min)
                .then_with(|| a.session.cmp(&b.session))
        });

        let shares = sessions
            .iter()
            .map(|s| ShareRow::new(s.feed_rate_mm_min, s.shares_percent.to_array()))
            .collect();
        let quasi_static_max = sessions.iter().fold(
            QuasiStaticMaxima {
                link_um: [0.0; 3],
                motion_um: [0.0; 3],
                thermal_um: [0.0; 3],
            },
            |acc, s| QuasiStaticMaxima {
                link_um: sup(acc.link_um, s.max_um.link),
                motion_um: sup(acc.motion_um, s.max_um.motion),
                thermal_um: sup(acc.thermal_um, s.max_um.thermal),
            },
        );
        let contouring_dynamic_max = sessions
            .iter()
            .map(|s| ContouringDynamicRow {
                feed_rate_mm_min: s.feed_rate_mm_min,
                contouring_max_um: s.max_um.contouring,
                dynamic_max_um: s.max_um.dynamic,
            })
            .collect();
        let dynamic_rms: Vec<DynamicRmsRow> = sessions
            .iter()
            .map(|s| DynamicRmsRow {
                feed_rate_mm_min: s.feed_rate_mm_min,
                dynamic_rms_um: s.rms_um.dynamic,
            })
            .collect();

        let mut warnings = Vec::new();
        let feeds: Vec<f64> = dynamic_rms.iter().map(|r| r.feed_rate_mm_min).collect();
        let distinct = feeds.windows(2).filter(|w| w[1] > w[0]).count() + 1;
        let power_law = if distinct >= 2 {
            let rms: Vec<[f64; 3]> = dynamic_rms.iter().map(|r| r.dynamic_rms_um).collect();
            let fit = fit_power_law(&feeds, &rms)?;
            warnings.extend(fit.warnings.iter().cloned());
            Some(fit)
        } else {
            let msg = "power-law fit skipped: it needs at least two distinct feed rates".to_string();
            log::warn!("{msg}");
            warnings.push(msg);
            None
        };

        Ok(Self {
            shares,
            quasi_static_max,
            contouring_dynamic_max,
            dynamic_rms,
            power_law,
            warnings,
            sessions,
        })
    }

    /// `F,dc,dl,dm,dtd,dd,sum` in percent.
    pub fn shares_csv(&self) -> String {
        let mut out = String::from("feed_mm_min,dc_pct,dl_pct,dm_pct,dtd_pct,dd_pct,sum_pct\n");
        for row in &self.shares {
            let s = row.shares_percent.to_array();
            out += &format!(
                "{},{},{},{},{},{},{}\n",
                row.feed_rate_mm_min, s[0], s[1], s[2], s[3], s[4], row.sum_percent
            );
        }
        out
    }

    /// `F,rms_x,rms_y,rms_z` of the dynamic contribution in µm.
    pub fn rms_csv(&self) -> String {
        let mut out = String::from("feed_mm_min,rms_x_um,rms_y_um,rms_z_um\n");
        for row in &self.dynamic_rms {
            let r = row.dynamic_rms_um;
            out += &format!("{},{},{},{}\n", row.feed_rate_mm_min, r[0], r[1], r[2]);
        }
        out
    }

    /// `direction,kappa,exponent,r_squared`; empty body without a fit.
    pub fn power_law_csv(&self) -> String {
        let mut out = String::from("direction,kappa,exponent,r_squared\n");
        if let Some(fit) = &self.power_law {
            for (name, term) in ["x", "y", "z"].iter().zip(fit.directions()) {
                if let Some(t) = term {
                    out += &format!("{name},{},{},{}\n", t.kappa, t.exponent, t.r_squared);
                }
            }
        }
        out
    }
}
