"""
Training schedule tests.
"""

import pytest
import torch

from gradcore.autodiff import parameter_checksum
from metalearn.schedule import (
    TRAIN_LOG_COLUMNS,
    EarlyStopping,
    holdout_split,
    train_stage,
    two_stage_train,
)
from predict.model import build_model
from utils.errors import InsufficientDataError
from utils.rng import XorShiftRNG


class TestEarlyStopping:
    """Test suite for EarlyStopping."""

    @pytest.mark.smoke
    @pytest.mark.meta
    def test_patience_exhausted(self):
        """Test training stops once patience epochs pass without improvement."""
        stopper = EarlyStopping(patience=3, min_delta=1e-5)
        losses = [1.0, 0.9, 0.95, 0.91, 0.92]
        decisions = [stopper.step(loss, epoch) for epoch, loss in enumerate(losses)]

        assert decisions == [False, False, False, False, True]
        assert stopper.best_epoch == 1

    @pytest.mark.meta
    def test_min_delta(self):
        """Test an improvement of 5e-6 does not reset patience."""
        stopper = EarlyStopping(patience=2, min_delta=1e-5)
        stopper.step(1.0, 0)

        assert stopper.step(1.0 - 5e-6, 1) is False
        assert stopper.step(1.0 - 9e-6, 2) is True
        assert stopper.best_epoch == 0

    @pytest.mark.meta
    def test_restore_best(self):
        """Test restore puts back the parameters from the best epoch."""
        module = torch.nn.Linear(2, 1).double()
        stopper = EarlyStopping(patience=5)
        with torch.no_grad():
            module.bias.fill_(1.0)
        stopper.step(0.5, 0, module)
        with torch.no_grad():
            module.bias.fill_(2.0)
        stopper.step(0.7, 1, module)

        stopper.restore(module)

        assert float(module.bias) == 1.0


class TestHoldoutSplit:
    """Test suite for holdout_split."""

    @pytest.mark.meta
    def test_last_fraction(self):
        """Test the last 10% is held out chronologically."""
        train, held = holdout_split(list(range(50)), 0.1)

        assert train == list(range(45))
        assert held == list(range(45, 50))

    @pytest.mark.meta
    def test_at_least_one(self):
        """Test small sets still hold out one window."""
        train, held = holdout_split([1, 2, 3], 0.1)

        assert (train, held) == ([1, 2], [3])

    @pytest.mark.meta
    def test_too_small(self):
        """Test a single window cannot be split."""
        with pytest.raises(InsufficientDataError):
            holdout_split([1], 0.1)


class TestTrainStage:
    """Test suite for train_stage."""

    @pytest.mark.meta
    def test_zero_epochs(self, small_config, small_city):
        """Test a zero-epoch stage returns the initial model."""
        model = build_model(small_config)
        before = parameter_checksum(model)
        train, held = holdout_split(small_city.windows("train"), 0.1)

        rng = XorShiftRNG(1)
        result = train_stage(
            model, train, held, small_city.context, small_config, "pretrain", 1e-3, 0, rng
        )

        assert parameter_checksum(model) == before
        assert result.records == []

    @pytest.mark.critical
    @pytest.mark.meta
    def test_seeded_trajectories_identical(self, small_config, small_city):
        """Test identical seeds give bit-identical training trajectories."""
        cfg = small_config.with_overrides(batch_size=8)
        train, held = holdout_split(small_city.windows("train")[:40], 0.1)
        models = [build_model(cfg), build_model(cfg)]

        results = [
            train_stage(
                m, train, held, small_city.context, cfg, "pretrain", 1e-3, 2, XorShiftRNG(2)
            )
            for m in models
        ]

        assert results[0].records == results[1].records
        assert parameter_checksum(models[0]) == parameter_checksum(models[1])

    @pytest.mark.meta
    def test_training_lowers_loss(self, small_config, small_city):
        """Test a few epochs at a moderate rate lower the training loss."""
        cfg = small_config.with_overrides(batch_size=8, patience=50)
        train, held = holdout_split(small_city.windows("train")[:32], 0.1)
        model = build_model(cfg)

        result = train_stage(
            model, train, held, small_city.context, cfg, "pretrain", 3e-3, 8, XorShiftRNG(3)
        )

        assert result.records[-1][2] < result.records[0][2]


class TestTwoStageTrain:
    """Test suite for two_stage_train."""

    @pytest.mark.meta
    def test_both_stages_logged(self, small_config, small_city, tmp_path):
        """Test pre-training and fine-tuning both run and are written to the log."""
        from dataio.dataset import prepare_city

        cfg = small_config.with_overrides(
            pretrain_epochs=1, finetune_epochs=1, adapt_days=0.2, batch_size=16
        )
        target = prepare_city(small_city.network, small_city.series, cfg, mode="target")
        log_path = tmp_path / "train.csv"

        model = build_model(cfg)
        result = two_stage_train(model, small_city, target, cfg, XorShiftRNG(4), log_path)

        assert list(result.log.columns) == TRAIN_LOG_COLUMNS
        assert result.log["stage"].tolist() == ["pretrain", "finetune"]
        assert log_path.read_text().splitlines()[0] == ",".join(TRAIN_LOG_COLUMNS)
        assert [stage.stage for stage in result.stages] == ["pretrain", "finetune"]
