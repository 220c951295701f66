"""Offline real-time bidding engine.

CTR estimation, a market price landscape, the budget-constrained MDP value
table with its bid rule, a neural approximation for large budgets, baseline
strategies and an episode replay evaluator.
"""
from .ctr import CtrHyper, CtrModel, auc, predict_ctr, train_ctr
from .dp import BidDecisionInput, DiffTable, ValueTable, bid_rlb, diff_table, solve_value_table
from .landscape import LandscapeModel, fit_landscape
from .logdata import CampaignStats, LogRecord, campaign_stats, parse_log

__version__ = "0.1.0"
