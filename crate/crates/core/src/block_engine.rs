//! Transaction layer around a [`DiamondPool`]: one collateralised unlock per
//! block, orders executed as plain CFMM swaps under the collateral bound,
//! and escrow settlement of the previous block at the next unlock.

use crate::conversion::{ConversionProcess, PriceSource};
use crate::diamond::{BlockResult, DiamondPool};
use crate::error::{Error, Result};
use crate::pool_math::{swap_exact_in, PoolCurve, Reserves, Token};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    User,
    Arbitrageur,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Order<T> {
    /// Token paid into the pool.
    pub side: Token,
    pub amount_in: T,
    pub origin: Origin,
}

impl<T: Scalar> Order<T> {
    pub fn new(side: Token, amount_in: T, origin: Origin) -> Result<Self> {
        if !(amount_in >= T::zero() && amount_in.is_finite()) {
            return Err(Error::param(format!(
                "order size must be non-negative, got {amount_in}"
            )));
        }
        Ok(Self {
            side,
            amount_in,
            origin,
        })
    }

    pub fn user(side: Token, amount_in: T) -> Result<Self> {
        Self::new(side, amount_in, Origin::User)
    }

    pub fn arbitrageur(side: Token, amount_in: T) -> Result<Self> {
        Self::new(side, amount_in, Origin::Arbitrageur)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnlockSession<T> {
    pub block: u64,
    pub start_reserves: Reserves<T>,
    /// Posted collateral `(C_x, C_y)`.
    pub collateral: (T, T),
    pub orders_applied: usize,
    pub current_reserves: Reserves<T>,
    /// Curve of the corresponding CFMM at `current_reserves`.
    pub curve: PoolCurve<T>,
}

impl<T: Scalar> UnlockSession<T> {
    pub fn collateral_of(&self, token: Token) -> T {
        match token {
            Token::X => self.collateral.0,
            Token::Y => self.collateral.1,
        }
    }

    /// Largest drop of `token` reserves the collateral allows under `beta`.
    pub fn max_outflow(&self, token: Token, beta: T) -> T {
        if beta.is_zero() {
            T::infinity()
        } else {
            self.collateral_of(token) / beta
        }
    }

    /// First token whose bound `C >= beta * (R_0 - R)` fails at `r`, with
    /// the collateral that state would need.
    fn violation(&self, r: &Reserves<T>, beta: T) -> Option<(Token, T)> {
        [Token::X, Token::Y].into_iter().find_map(|token| {
            let required = beta * (self.start_reserves.get(token) - r.get(token));
            (required > self.collateral_of(token)).then_some((token, required))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExecutionReport<T> {
    Executed {
        amount_out: T,
        reserves: Reserves<T>,
    },
    Rejected {
        token: Token,
        required: T,
        posted: T,
    },
}

impl<T> ExecutionReport<T> {
    pub fn is_executed(&self) -> bool {
        matches!(self, ExecutionReport::Executed { .. })
    }
}

/// Escrow outcome of one closed block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EscrowReceipt<T> {
    pub block: u64,
    pub collateral: (T, T),
    /// Token the pool lost over the block, if any.
    pub owed_token: Option<Token>,
    /// `beta * Upsilon` of the owed token paid from escrow into the pool.
    pub debit: T,
    /// Owed token moved from the pool into the vault.
    pub skim: T,
    /// Share `beta` of the inflow token handed back to the arbitrageur.
    pub inflow_return: T,
    /// Collateral returned, `(C_x, C_y)` less the debit.
    pub refund: (T, T),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockClose<T> {
    pub result: BlockResult<T>,
    pub escrow: EscrowReceipt<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RebateController<T> {
    pub beta_initial: T,
    pub beta_current: T,
    /// Multiplier applied after each block without transactions.
    pub decay: T,
}

impl<T: Scalar> RebateController<T> {
    pub const DEFAULT_DECAY: f64 = 0.9;

    pub fn new(beta_initial: T, decay: T) -> Result<Self> {
        if !(beta_initial >= T::zero() && beta_initial < T::one()) {
            return Err(Error::param(format!(
                "initial rebate must lie in [0, 1), got {beta_initial}"
            )));
        }
        if !(decay > T::zero() && decay <= T::one()) {
            return Err(Error::param(format!(
                "rebate decay must lie in (0, 1], got {decay}"
            )));
        }
        Ok(Self {
            beta_initial,
            beta_current: beta_initial,
            decay,
        })
    }

    pub fn tick(&mut self, had_activity: bool) -> T {
        self.beta_current = if had_activity {
            self.beta_initial
        } else {
            self.beta_current * self.decay
        };
        self.beta_current
    }
}

#[derive(Clone, Debug)]
pub struct BlockEngine<T> {
    pool: DiamondPool<T>,
    process: ConversionProcess<T>,
    fee: T,
    rebate: RebateController<T>,
    block: u64,
    session: Option<UnlockSession<T>>,
    unlocked_in: Option<u64>,
    pending: Option<EscrowReceipt<T>>,
}

impl<T: Scalar> BlockEngine<T> {
    /// Wraps `pool`, using its rebate parameter as the initial value.
    pub fn new(pool: DiamondPool<T>, process: ConversionProcess<T>) -> Result<Self> {
        let rebate = RebateController::new(
            pool.params().beta,
            T::lit(RebateController::<T>::DEFAULT_DECAY),
        )?;
        Ok(Self {
            pool,
            process,
            fee: T::zero(),
            rebate,
            block: 0,
            session: None,
            unlocked_in: None,
            pending: None,
        })
    }

    pub fn with_fee(mut self, fee: T) -> Result<Self> {
        if !(fee >= T::zero() && fee < T::one()) {
            return Err(Error::param(format!("fee must lie in [0, 1), got {fee}")));
        }
        self.fee = fee;
        Ok(self)
    }

    pub fn with_decay(mut self, decay: T) -> Result<Self> {
        self.rebate = RebateController::new(self.rebate.beta_initial, decay)?;
        Ok(self)
    }

    pub fn pool(&self) -> &DiamondPool<T> {
        &self.pool
    }

    pub fn session(&self) -> Option<&UnlockSession<T>> {
        self.session.as_ref()
    }

    pub fn rebate(&self) -> &RebateController<T> {
        &self.rebate
    }

    pub fn block(&self) -> u64 {
        self.block
    }

    pub fn pending_escrow(&self) -> Option<&EscrowReceipt<T>> {
        self.pending.as_ref()
    }

    /// Opens this block's session and settles the previous block's escrow,
    /// which is returned.
    pub fn unlock(&mut self, collateral: (T, T)) -> Result<Option<EscrowReceipt<T>>> {
        if self.unlocked_in == Some(self.block) {
            return Err(Error::SessionAlreadyOpen { block: self.block });
        }
        for c in [collateral.0, collateral.1] {
            if !(c >= T::zero() && c.is_finite()) {
                return Err(Error::param(format!(
                    "collateral must be non-negative, got {c}"
                )));
            }
        }
        self.pool.set_beta(self.rebate.beta_current)?;
        let settled = self.pending.take();
        let r = self.pool.reserves();
        self.session = Some(UnlockSession {
            block: self.block,
            start_reserves: r,
            collateral,
            orders_applied: 0,
            current_reserves: r,
            curve: self.pool.curve(),
        });
        self.unlocked_in = Some(self.block);
        Ok(settled)
    }

    /// Executes `order` against the corresponding CFMM, or rejects it with
    /// no state change if the result breaks the collateral bound.
    pub fn execute_order(&mut self, order: &Order<T>) -> Result<ExecutionReport<T>> {
        let beta = self.pool.params().beta;
        let session = self.session.as_mut().ok_or(Error::NoOpenSession)?;
        let swap = swap_exact_in(
            &session.curve,
            &session.current_reserves,
            order.amount_in,
            order.side,
            self.fee,
        )?;
        if order.amount_in.is_zero() {
            return Ok(ExecutionReport::Executed {
                amount_out: swap.amount_out,
                reserves: swap.reserves,
            });
        }
        if let Some((token, required)) = session.violation(&swap.reserves, beta) {
            return Ok(ExecutionReport::Rejected {
                token,
                required,
                posted: session.collateral_of(token),
            });
        }
        session.current_reserves = swap.reserves;
        session.curve = swap.curve;
        session.orders_applied += 1;
        Ok(ExecutionReport::Executed {
            amount_out: swap.amount_out,
            reserves: swap.reserves,
        })
    }

    /// Applies the session's net move as the block transition, runs the
    /// end-of-block vault logic and books the escrow for settlement at the
    /// next unlock.
    pub fn close_block<S: PriceSource<T>>(
        &mut self,
        eps: T,
        source: &mut S,
    ) -> Result<BlockClose<T>> {
        let session = self.session.take().ok_or(Error::NoOpenSession)?;
        let beta = self.pool.params().beta;
        let start = session.start_reserves;
        let end = session.current_reserves;
        let moved = session.orders_applied > 0 && end != start;
        let arb = if moved {
            self.pool.apply_net_move(end, eps)?
        } else {
            BlockResult::idle()
        };

        let owed_token = [Token::X, Token::Y]
            .into_iter()
            .find(|&t| end.get(t) < start.get(t));
        let mut escrow = EscrowReceipt {
            block: session.block,
            collateral: session.collateral,
            owed_token,
            debit: T::zero(),
            skim: T::zero(),
            inflow_return: T::zero(),
            refund: session.collateral,
        };
        if let Some(token) = owed_token {
            let debit = beta * (start.get(token) - end.get(token));
            let posted = session.collateral_of(token);
            if debit > posted {
                return Err(Error::EscrowShortfall {
                    token,
                    owed: debit.as_f64(),
                    posted: posted.as_f64(),
                });
            }
            let inflow = token.other();
            escrow.debit = debit;
            escrow.skim = arb.vault_skim.map_or(T::zero(), |(_, v)| v);
            escrow.inflow_return = beta * (end.get(inflow) - start.get(inflow)).max(T::zero());
            match token {
                Token::X => escrow.refund.0 = posted - debit,
                Token::Y => escrow.refund.1 = posted - debit,
            }
        }

        let result = self.pool.finish_block(arb, eps, &self.process, source)?;
        self.rebate.tick(session.orders_applied > 0);
        self.block += 1;
        self.pending = Some(escrow);
        Ok(BlockClose { result, escrow })
    }

    /// A block with no unlock: end-of-block vault logic only, and the rebate
    /// parameter decays.
    pub fn empty_block<S: PriceSource<T>>(
        &mut self,
        eps: T,
        source: &mut S,
    ) -> Result<BlockResult<T>> {
        if self.session.is_some() {
            return Err(Error::domain("an unlock session is still open"));
        }
        let result = self
            .pool
            .finish_block(BlockResult::idle(), eps, &self.process, source)?;
        self.rebate.tick(false);
        self.block += 1;
        Ok(result)
    }

    /// Settles any escrow still pending, as at the end of a simulation.
    pub fn settle_pending(&mut self) -> Option<EscrowReceipt<T>> {
        self.pending.take()
    }
}
