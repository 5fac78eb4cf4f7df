from dhrec.agents.baselines import OracleAgent, RandomAgent
from dhrec.agents.dfm import DfmAgent, DfmModel, FieldEncoder, dfm_predict, dfm_train
from dhrec.agents.features import StateEncoder
from dhrec.agents.replay import Batch, ReplayBuffer
from dhrec.agents.sac import SacAgent, choose, policy_entropy
from dhrec.agents.sarsa import QTable, SarsaAgent, sarsa_update
from dhrec.agents.slateq import (
    LogitChoiceModel,
    QBarTable,
    SlateQAgent,
    fit_choice_model,
    select_slate,
    slate_value,
    slateq_update,
)

__all__ = [
    "Batch",
    "DfmAgent",
    "DfmModel",
    "FieldEncoder",
    "LogitChoiceModel",
    "OracleAgent",
    "QBarTable",
    "QTable",
    "RandomAgent",
    "ReplayBuffer",
    "SacAgent",
    "SarsaAgent",
    "SlateQAgent",
    "StateEncoder",
    "choose",
    "dfm_predict",
    "dfm_train",
    "fit_choice_model",
    "policy_entropy",
    "sarsa_update",
    "select_slate",
    "slate_value",
    "slateq_update",
]
