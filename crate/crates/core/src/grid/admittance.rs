use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::Network;
use crate::error::{Error, Result};

/// Bus admittance matrix split into conductance and susceptance parts (p.u.).
#[derive(Clone, Debug)]
pub struct AdmittanceMatrix {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn get(&self, i: usize, k: usize) -> Complex64 {
        Complex64::new(self.g[(i, k)], self.b[(i, k)])
    }
}

/// Standard pi-model Y-bus with off-nominal taps, phase shifters and bus shunts.
pub fn build_admittance(net: &Network) -> Result<AdmittanceMatrix> {
    let n = net.n_buses();
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for br in &net.branches {
        let z = Complex64::new(br.r, br.x);
        if z.norm() == 0.0 {
            return Err(Error::ZeroImpedance {
                from: net.buses[br.from].id,
                to: net.buses[br.to].id,
            });
        }
        let ys = z.inv();
        let charging = Complex64::new(0.0, br.b / 2.0);
        let tap = Complex64::from_polar(br.tap, br.shift_deg.to_radians());
        let ytt = ys + charging;
        let yff = ytt / (br.tap * br.tap);
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        y[(br.from, br.from)] += yff;
        y[(br.to, br.to)] += ytt;
        y[(br.from, br.to)] += yft;
        y[(br.to, br.from)] += ytf;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(bus.g_shunt, bus.b_shunt) / net.base_mva;
    }
    Ok(AdmittanceMatrix {
        g: y.map(|c| c.re),
        b: y.map(|c| c.im),
    })
}
