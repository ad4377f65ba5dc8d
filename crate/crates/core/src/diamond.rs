//! The Diamond pool state machine.
//!
//! Each block the arbitrageur moves the corresponding CFMM to its optimum.
//! The Diamond pool only honours `(1 - beta)` of that move, then skims the
//! token the arbitrageur was buying into the vault until the pool price
//! matches the target price. A vault rebalance moves the price-matched part
//! of the vault back into the pool, and every `tau` blocks the remaining
//! single-typed vault is converted and re-added.

use crate::conversion::{
    cvf_convert, pca_convert, settle_futures, settle_price, AuctionQuote, ConversionProcess,
    FuturesPosition, PriceSource, SettlementPair,
};
use crate::error::{Error, Result};
use crate::pool_math::{self, solve_reserve_for_price, CurveKind, PoolCurve, Reserves, Token};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiamondParams<T> {
    /// LVR rebate parameter, the share of each block's LVR kept by the pool.
    pub beta: T,
    /// Conversion frequency in blocks.
    pub tau: u64,
}

impl<T: Scalar> DiamondParams<T> {
    pub fn new(beta: T, tau: u64) -> Result<Self> {
        if !(beta > T::zero() && beta < T::one()) {
            return Err(Error::param(format!(
                "rebate parameter must lie in (0, 1), got {beta}"
            )));
        }
        if tau == 0 {
            return Err(Error::param(
                "conversion frequency must be at least one block",
            ));
        }
        Ok(Self { beta, tau })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vault<T> {
    pub vx: T,
    pub vy: T,
}

impl<T: Scalar> Vault<T> {
    pub fn is_empty(&self) -> bool {
        self.vx.is_zero() && self.vy.is_zero()
    }

    /// The only token held, or `None` when empty. Errors if both are held.
    pub fn single(&self) -> Result<Option<(Token, T)>> {
        match (self.vx > T::zero(), self.vy > T::zero()) {
            (false, false) => Ok(None),
            (true, false) => Ok(Some((Token::X, self.vx))),
            (false, true) => Ok(Some((Token::Y, self.vy))),
            (true, true) => Err(Error::domain(format!(
                "vault holds both tokens ({}, {}); rebalance first",
                self.vx, self.vy
            ))),
        }
    }

    pub fn value_at(&self, eps: T) -> T {
        self.vx + self.vy * eps
    }

    fn deposit(&mut self, token: Token, amount: T) {
        match token {
            Token::X => self.vx = self.vx + amount,
            Token::Y => self.vy = self.vy + amount,
        }
    }
}

/// What one block did to the pool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockResult<T> {
    /// Arbitrageur profit valued at the block's external price.
    pub arb_profit: T,
    /// Token and amount moved from the pool into the vault.
    pub vault_skim: Option<(Token, T)>,
    /// LVR the corresponding CFMM would have suffered.
    pub cfmm_lvr: T,
    /// LVR actually suffered by the Diamond pool; equals `arb_profit`.
    pub diamond_lvr: T,
    pub conversion: ConversionReport<T>,
}

impl<T: Scalar> BlockResult<T> {
    pub(crate) fn idle() -> Self {
        Self {
            arb_profit: T::zero(),
            vault_skim: None,
            cfmm_lvr: T::zero(),
            diamond_lvr: T::zero(),
            conversion: ConversionReport::default(),
        }
    }

    /// LVR kept by the pool this block.
    pub fn rebate(&self) -> T {
        self.cfmm_lvr - self.diamond_lvr
    }
}

/// Conversion and futures settlement activity at the end of a block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConversionReport<T> {
    /// Tokens re-added to the pool by conversion.
    pub added: SettlementPair<T>,
    pub auction: Option<AuctionQuote<T>>,
    pub opened: Option<FuturesPosition<T>>,
    pub settled: usize,
    pub settlement_price: Option<T>,
    /// Tokens moved by futures settlement (negative components were paid out).
    pub settlement: SettlementPair<T>,
    /// Change in pool + vault + open-futures value at the block price caused
    /// by conversion and settlement. Zero when auctions and oracles are fair.
    pub transfer: T,
}

impl<T: Scalar> Default for ConversionReport<T> {
    fn default() -> Self {
        Self {
            added: SettlementPair::zero(),
            auction: None,
            opened: None,
            settled: 0,
            settlement_price: None,
            settlement: SettlementPair::zero(),
            transfer: T::zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiamondPool<T> {
    reserves: Reserves<T>,
    curve: PoolCurve<T>,
    vault: Vault<T>,
    params: DiamondParams<T>,
    open_futures: Vec<FuturesPosition<T>>,
    block_height: u64,
}

impl<T: Scalar> DiamondPool<T> {
    pub fn new(
        reserves: Reserves<T>,
        kind: CurveKind<T>,
        params: DiamondParams<T>,
    ) -> Result<Self> {
        let reserves = Reserves::new(reserves.rx, reserves.ry)?;
        let curve = PoolCurve::through(kind, &reserves)?;
        Ok(Self {
            reserves,
            curve,
            vault: Vault::default(),
            params,
            open_futures: Vec::new(),
            block_height: 0,
        })
    }

    pub fn product(rx: T, ry: T, beta: T, tau: u64) -> Result<Self> {
        Self::new(
            Reserves { rx, ry },
            CurveKind::Product,
            DiamondParams::new(beta, tau)?,
        )
    }

    pub fn reserves(&self) -> Reserves<T> {
        self.reserves
    }

    pub fn curve(&self) -> PoolCurve<T> {
        self.curve
    }

    pub fn vault(&self) -> Vault<T> {
        self.vault
    }

    pub fn params(&self) -> DiamondParams<T> {
        self.params
    }

    pub fn open_futures(&self) -> &[FuturesPosition<T>] {
        &self.open_futures
    }

    pub fn block_height(&self) -> u64 {
        self.block_height
    }

    pub fn price(&self) -> Result<T> {
        self.curve.price(&self.reserves)
    }

    /// Changes the rebate parameter; `0 <= beta < 1` so a decayed rebate
    /// may reach zero.
    pub fn set_beta(&mut self, beta: T) -> Result<()> {
        if !(beta >= T::zero() && beta < T::one()) {
            return Err(Error::param(format!(
                "rebate parameter must lie in [0, 1), got {beta}"
            )));
        }
        self.params.beta = beta;
        Ok(())
    }

    /// Pool, vault and open futures marked at `eps`.
    pub fn value_at(&self, eps: T) -> T {
        let futures = self
            .open_futures
            .iter()
            .fold(T::zero(), |acc, p| acc + p.pnl(eps));
        self.reserves.value_at(eps) + self.vault.value_at(eps) + futures
    }

    fn set_reserves(&mut self, r: Reserves<T>) -> Result<()> {
        self.curve = self.curve.rebased(&r)?;
        self.reserves = r;
        Ok(())
    }

    /// Plain CFMM swap against the pool reserves; returns the output amount.
    pub fn swap(&mut self, amount_in: T, side: Token, fee: T) -> Result<T> {
        let out = pool_math::swap_exact_in(&self.curve, &self.reserves, amount_in, side, fee)?;
        self.reserves = out.reserves;
        self.curve = out.curve;
        Ok(out.amount_out)
    }

    /// Per-block transition for the optimal arbitrage at `eps`.
    pub fn apply_arbitrage(&mut self, eps: T) -> Result<BlockResult<T>> {
        let arb = pool_math::arb_target(&self.curve, &self.reserves, eps)?;
        self.apply_deltas(arb.delta_x, arb.delta_y, eps, eps, arb.lvr)
    }

    /// Per-block transition for an arbitrary net move of the corresponding
    /// CFMM from the current reserves to `cfmm_end`. The pool finishes at
    /// the price of `cfmm_end`; `eps` is only used for valuation.
    pub fn apply_net_move(&mut self, cfmm_end: Reserves<T>, eps: T) -> Result<BlockResult<T>> {
        let end_price = self.curve.price(&cfmm_end)?;
        let cfmm_lvr = pool_math::lvr(&self.reserves, eps, &self.curve)?;
        let dx = cfmm_end.rx - self.reserves.rx;
        let dy = cfmm_end.ry - self.reserves.ry;
        self.apply_deltas(dx, dy, end_price, eps, cfmm_lvr)
    }

    fn apply_deltas(
        &mut self,
        dx: T,
        dy: T,
        target_price: T,
        eps: T,
        cfmm_lvr: T,
    ) -> Result<BlockResult<T>> {
        if dx.is_zero() && dy.is_zero() {
            return Ok(BlockResult {
                cfmm_lvr,
                ..BlockResult::idle()
            });
        }
        if dx < T::zero() && dy < T::zero() {
            return Err(Error::domain(
                "net move withdraws both tokens from the pool",
            ));
        }
        let keep = T::one() - self.params.beta;
        let moved = self.reserves.shifted(keep * dx, keep * dy);
        // the arbitrageur nets the token flowing out of the pool; skim it
        let skim_token = if dy < T::zero() {
            Some(Token::Y)
        } else if dx < T::zero() {
            Some(Token::X)
        } else {
            None
        };
        let mut next = moved;
        let mut skim = None;
        if let Some(token) = skim_token {
            let fixed = moved.get(token.other());
            let start = moved.get(token);
            let solved =
                solve_reserve_for_price(&self.curve.kind, token, fixed, start, target_price)?;
            let amount = start - solved;
            if amount > T::zero() {
                *next.get_mut(token) = solved;
                self.vault.deposit(token, amount);
                skim = Some((token, amount));
            }
        }
        if !next.is_positive() {
            return Err(Error::domain(format!(
                "transition left reserves ({}, {})",
                next.rx, next.ry
            )));
        }
        self.set_reserves(next)?;
        let arb_profit = -keep * (dx + dy * eps);
        Ok(BlockResult {
            arb_profit,
            vault_skim: skim,
            cfmm_lvr,
            diamond_lvr: arb_profit,
            conversion: ConversionReport::default(),
        })
    }

    /// Moves the price-matched part of the vault into the pool at price `p`.
    /// Afterwards the vault holds at most one token.
    pub fn vault_rebalance(&mut self, p: T) -> Result<()> {
        if !(p > T::zero()) {
            return Err(Error::domain(format!(
                "rebalance price must be positive, got {p}"
            )));
        }
        let Vault { vx, vy } = self.vault;
        if vx.is_zero() && vy.is_zero() {
            return Ok(());
        }
        let (add_x, add_y) = if vy * p > vx {
            (vx, vx / p)
        } else {
            (vy * p, vy)
        };
        self.vault = Vault {
            vx: (vx - add_x).max(T::zero()),
            vy: (vy - add_y).max(T::zero()),
        };
        // one side is exactly exhausted; clear rounding dust on it
        if vy * p > vx {
            self.vault.vx = T::zero();
        } else {
            self.vault.vy = T::zero();
        }
        let next = self.reserves.shifted(add_x, add_y);
        self.set_reserves(next)
    }

    fn add_pair(&mut self, pair: SettlementPair<T>) -> Result<()> {
        let next = self.reserves.shifted(pair.s_x, pair.s_y);
        for (token, amount, held) in [
            (Token::X, pair.s_x, self.reserves.rx),
            (Token::Y, pair.s_y, self.reserves.ry),
        ] {
            if amount < T::zero() && -amount >= held {
                return Err(Error::Liquidation {
                    token,
                    owed: (-amount).as_f64(),
                    available: held.as_f64(),
                });
            }
        }
        self.set_reserves(next)
    }

    /// Arbitrage to `eps`, then the rest of the block.
    pub fn end_of_block<S: PriceSource<T>>(
        &mut self,
        eps: T,
        process: &ConversionProcess<T>,
        source: &mut S,
    ) -> Result<BlockResult<T>> {
        let arb = self.apply_arbitrage(eps)?;
        self.finish_block(arb, eps, process, source)
    }

    /// Vault rebalance at the pool price, conversion on cadence, and the
    /// block counter. `arb` is the transition already applied this block.
    pub fn finish_block<S: PriceSource<T>>(
        &mut self,
        mut arb: BlockResult<T>,
        eps: T,
        process: &ConversionProcess<T>,
        source: &mut S,
    ) -> Result<BlockResult<T>> {
        let p = self.price()?;
        self.vault_rebalance(p)?;
        self.block_height += 1;
        let due = self.block_height.is_multiple_of(self.params.tau);
        let mut report = ConversionReport::default();
        match process {
            ConversionProcess::Pca { auction } => {
                if due {
                    if let Some(out) = pca_convert(&self.vault, eps, auction)? {
                        self.vault = Vault::default();
                        self.add_pair(out.pair)?;
                        report.added = out.pair;
                        report.auction = Some(out.quote);
                        report.transfer = out.transfer;
                    }
                }
            }
            ConversionProcess::Cvf { settlement } => {
                if due && !self.open_futures.is_empty() {
                    let p_t = settle_price(*settlement, eps, source);
                    let mut pair = SettlementPair::zero();
                    let mut marked = T::zero();
                    for pos in &self.open_futures {
                        pair = pair + settle_futures(pos, p_t)?;
                        marked = marked + pos.pnl(eps);
                    }
                    self.add_pair(pair)?;
                    report.settled = self.open_futures.len();
                    report.settlement_price = Some(p_t);
                    report.settlement = pair;
                    report.transfer = report.transfer + pair.value_at(eps) - marked;
                    self.open_futures.clear();
                }
                if let Some((pair, pos)) = cvf_convert(&self.vault, p, self.block_height)? {
                    let vault_value = self.vault.value_at(eps);
                    self.vault = Vault::default();
                    self.add_pair(pair)?;
                    report.added = pair;
                    report.opened = Some(pos);
                    report.transfer =
                        report.transfer + pair.value_at(eps) + pos.pnl(eps) - vault_value;
                    self.open_futures.push(pos);
                }
            }
        }
        arb.conversion = report;
        Ok(arb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conversion::{AuctionModel, ExactPrice, SettlementMode};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn pool(beta: f64, tau: u64) -> DiamondPool<f64> {
        DiamondPool::product(100.0, 100.0, beta, tau).unwrap()
    }

    fn pca() -> ConversionProcess<f64> {
        ConversionProcess::Pca {
            auction: AuctionModel::fair(),
        }
    }

    #[test]
    fn params_validation() {
        assert!(DiamondParams::new(0.0, 1).is_err());
        assert!(DiamondParams::new(1.0, 1).is_err());
        assert!(DiamondParams::new(0.5, 0).is_err());
        assert!(DiamondParams::new(0.5, 3).is_ok());
    }

    #[test]
    fn arbitrage_half_rebate() {
        let mut p = pool(0.5, 1);
        let r = p.apply_arbitrage(1.21).unwrap();
        let (token, skim) = r.vault_skim.unwrap();
        assert_eq!(token, Token::Y);
        assert!(close(skim, 8.677686, 1e-6));
        assert!(close(p.reserves().rx, 105.0, 1e-12));
        assert!(close(p.reserves().ry, 86.776859, 1e-6));
        assert!(close(r.arb_profit, 0.5, 1e-12));
        assert!(close(r.cfmm_lvr, 1.0, 1e-12));
        assert!(close(p.price().unwrap(), 1.21, 1e-12));
    }

    #[test]
    fn arbitrage_high_rebate() {
        let mut p = pool(0.95, 1);
        let r = p.apply_arbitrage(1.21).unwrap();
        assert!(close(r.vault_skim.unwrap().1, 16.487603, 1e-6));
        assert!(close(p.reserves().rx, 100.5, 1e-12));
        assert!(close(p.reserves().ry, 83.057851, 1e-6));
        assert!(close(r.arb_profit, 0.05, 1e-12));
    }

    #[test]
    fn arbitrage_downward_skims_x() {
        let mut p = pool(0.5, 1);
        let r = p.apply_arbitrage(0.81).unwrap();
        assert_eq!(r.vault_skim.unwrap().0, Token::X);
        assert!(close(p.price().unwrap(), 0.81, 1e-12));
        assert!(close(r.arb_profit, 0.5, 1e-12));
    }

    #[test]
    fn arbitrage_at_pool_price_is_noop() {
        for beta in [0.1, 0.5, 0.95] {
            let mut p = pool(beta, 1);
            let r = p.apply_arbitrage(1.0).unwrap();
            assert_eq!(r.arb_profit, 0.0);
            assert!(r.vault_skim.is_none());
            assert!(p.vault().is_empty());
            assert_eq!(
                p.reserves(),
                Reserves {
                    rx: 100.0,
                    ry: 100.0
                }
            );
        }
    }

    #[test]
    fn arbitrage_rejects_bad_price() {
        let mut p = pool(0.5, 1);
        assert!(p.apply_arbitrage(0.0).is_err());
        assert!(p.apply_arbitrage(-2.0).is_err());
    }

    #[test]
    fn rebalance_examples() {
        let mut p = pool(0.5, 1);
        p.vault = Vault {
            vx: 9.5,
            vy: 8.677686,
        };
        p.vault_rebalance(1.21).unwrap();
        assert_eq!(p.vault().vx, 0.0);
        assert!(close(p.vault().vy, 0.826446, 1e-6));
        assert!(close(p.reserves().rx, 109.5, 1e-12));
        assert!(close(p.reserves().ry, 107.851240, 1e-6));

        let mut q = pool(0.5, 1);
        q.vault_rebalance(1.21).unwrap();
        assert_eq!(
            q.reserves(),
            Reserves {
                rx: 100.0,
                ry: 100.0
            }
        );

        let mut e = pool(0.5, 1);
        e.vault = Vault { vx: 2.42, vy: 2.0 };
        e.vault_rebalance(1.21).unwrap();
        assert!(e.vault().is_empty());
    }

    #[test]
    fn end_of_block_pca_daily() {
        let mut p = pool(0.5, 1);
        let before = p.reserves();
        let r = p.end_of_block(1.21, &pca(), &mut ExactPrice).unwrap();
        let conv = r.conversion;
        assert!(close(conv.added.s_x, 5.25, 1e-6));
        assert!(close(conv.added.s_y, 4.338843, 1e-6));
        assert!(p.vault().is_empty());
        assert!(close(p.reserves().rx, before.rx + 5.0 + 5.25, 1e-6));
        assert!(close(p.price().unwrap(), 1.21, 1e-12));
        assert_eq!(p.block_height(), 1);
    }

    #[test]
    fn end_of_block_respects_cadence() {
        let mut p = pool(0.5, 10);
        p.block_height = 3;
        let r = p.end_of_block(1.21, &pca(), &mut ExactPrice).unwrap();
        assert!(r.conversion.auction.is_none());
        assert!(!p.vault().is_empty());
        assert_eq!(p.block_height(), 4);
    }

    #[test]
    fn flat_path_matches_cfmm_forever() {
        for process in [
            pca(),
            ConversionProcess::Cvf {
                settlement: SettlementMode::BatchOracle,
            },
        ] {
            let mut p = pool(0.9, 3);
            for _ in 0..50 {
                p.end_of_block(1.0, &process, &mut ExactPrice).unwrap();
            }
            assert_eq!(
                p.reserves(),
                Reserves {
                    rx: 100.0,
                    ry: 100.0
                }
            );
            assert!(p.vault().is_empty());
        }
    }

    #[test]
    fn cvf_opens_and_settles_positions() {
        let process = ConversionProcess::Cvf {
            settlement: SettlementMode::FuturesAuction,
        };
        let mut p = pool(0.5, 2);
        let r1 = p.end_of_block(1.21, &process, &mut ExactPrice).unwrap();
        assert!(r1.conversion.opened.is_some());
        assert_eq!(p.open_futures().len(), 1);
        assert!(p.vault().is_empty());
        assert!(close(p.price().unwrap(), 1.21, 1e-12));
        let r2 = p.end_of_block(1.25, &process, &mut ExactPrice).unwrap();
        assert_eq!(r2.conversion.settled, 1);
        assert_eq!(r2.conversion.settlement_price, Some(1.25));
        // pool long y futures bought at 1.21 wins when the price rises
        assert!(r2.conversion.settlement.s_x > 0.0);
        assert!(r2.conversion.transfer.abs() < 1e-12);
        // this block's own conversion stays open until the next settlement
        assert_eq!(p.open_futures().len(), 1);
    }

    #[test]
    fn liquidation_reported() {
        let mut p = pool(0.5, 1);
        p.open_futures.push(
            FuturesPosition::new(1e6, Token::Y, 1.0, crate::conversion::Side::Long, 0).unwrap(),
        );
        let process = ConversionProcess::Cvf {
            settlement: SettlementMode::FuturesAuction,
        };
        let err = p.end_of_block(0.5, &process, &mut ExactPrice).unwrap_err();
        assert!(matches!(err, Error::Liquidation { .. }));
    }

    #[test]
    fn weighted_curve_transition() {
        let r = Reserves {
            rx: 100.0,
            ry: 100.0,
        };
        let params = DiamondParams::new(0.6, 1).unwrap();
        let mut p = DiamondPool::new(r, CurveKind::Weighted { weight_x: 0.3 }, params).unwrap();
        let start = p.price().unwrap();
        let res = p.apply_arbitrage(start * 1.3).unwrap();
        assert!(close(p.price().unwrap(), start * 1.3, 1e-10 * start));
        assert!((res.arb_profit - 0.4 * res.cfmm_lvr).abs() <= 1e-8 * res.cfmm_lvr);
    }

    #[test]
    fn f32_pool_runs() {
        let mut p = DiamondPool::<f32>::product(100.0, 100.0, 0.5, 1).unwrap();
        let r = p.apply_arbitrage(1.21).unwrap();
        assert!((r.arb_profit - 0.5).abs() < 1e-4);
        assert!((p.price().unwrap() - 1.21).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn rebate_and_conservation(rx in 1.0f64..1e9, ry in 1.0f64..1e9, beta in 0.01f64..0.99, m in -0.6f64..1.5) {
            let mut p = DiamondPool::product(rx, ry, beta, 1).unwrap();
            let eps = rx / ry * (1.0 + m);
            let before = p.reserves().value_at(eps) + p.vault().value_at(eps);
            let curve = p.curve();
            let start = p.reserves();
            let r = p.apply_arbitrage(eps).unwrap();
            let lvr = pool_math::lvr(&start, eps, &curve).unwrap();
            prop_assert!((r.arb_profit - (1.0 - beta) * lvr).abs() <= 1e-9 * r.arb_profit.abs().max(lvr * (1.0 - beta)));
            prop_assert!(r.cfmm_lvr >= r.diamond_lvr);
            let after = p.reserves().value_at(eps) + p.vault().value_at(eps);
            prop_assert!(((before - after) - r.arb_profit).abs() <= 1e-9 * before);
            prop_assert!((p.price().unwrap() / eps - 1.0).abs() <= 1e-12);
            prop_assert!(p.curve().contains(&p.reserves()));
            p.vault_rebalance(p.price().unwrap()).unwrap();
            prop_assert!(p.vault().single().is_ok());
        }
    }
}
