from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import torch
from torch.optim.lr_scheduler import LambdaLR

from bido.utils.errors import ShapeMismatch


@dataclass
class OptimizerState:
    """SGD-with-momentum state plus the step-decay schedule driving it."""

    optimizer: torch.optim.SGD
    scheduler: LambdaLR

    @property
    def learning_rate(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    @property
    def momentum(self) -> float:
        return self.optimizer.param_groups[0]["momentum"]

    def velocity(self, param: torch.Tensor) -> torch.Tensor:
        buffer = self.optimizer.state.get(param, {}).get("momentum_buffer")
        return buffer if buffer is not None else torch.zeros_like(param)

    def end_epoch(self) -> None:
        self.scheduler.step()


class OptimizerServices:
    @staticmethod
    def build(
        params: Iterable[torch.nn.Parameter],
        lr: float = 0.001,
        momentum: float = 0.9,
        decay_factor: float = 0.9,
        decay_every: int = 2,
    ) -> OptimizerState:
        """
        Create an optimizer whose rate is lr * decay_factor ** (epoch // decay_every).

        Args:
            params (Iterable[torch.nn.Parameter]): Parameters to optimize.
            lr (float): Initial learning rate.
            momentum (float): Momentum coefficient.
            decay_factor (float): Multiplicative decay.
            decay_every (int): Epochs between decays.

        Returns:
            OptimizerState: The optimizer and its schedule.
        """
        optimizer = torch.optim.SGD(
            list(params), lr=lr, momentum=momentum, dampening=0.0, foreach=False
        )
        scheduler = LambdaLR(optimizer, lambda epoch: decay_factor ** (epoch // decay_every))
        return OptimizerState(optimizer=optimizer, scheduler=scheduler)

    @staticmethod
    def sgd_momentum_step(
        params: Sequence[torch.Tensor],
        grads: Sequence[Optional[torch.Tensor]],
        state: OptimizerState,
    ) -> None:
        """
        Apply v <- momentum * v + g; p <- p - lr * v in place.

        Args:
            params (Sequence[torch.Tensor]): Parameters registered with `state`.
            grads (Sequence[Optional[torch.Tensor]]): One gradient per parameter;
                None counts as zero.
            state (OptimizerState): Optimizer state, updated in place.
        """
        if len(params) != len(grads):
            raise ShapeMismatch(f"{len(params)} parameters but {len(grads)} gradients")
        for param, grad in zip(params, grads):
            if grad is None:
                grad = torch.zeros_like(param)
            if grad.shape != param.shape:
                raise ShapeMismatch(
                    f"gradient shape {tuple(grad.shape)} != parameter shape {tuple(param.shape)}"
                )
            param.grad = grad.detach().clone()
        state.optimizer.step()
        state.optimizer.zero_grad(set_to_none=True)
