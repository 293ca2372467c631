import numpy as np


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-2):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, clip_norm=None):
        self.t += 1
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if clip_norm is not None:
            total = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if total > clip_norm:
                grads = [g * (clip_norm / total) for g in grads]
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * self.weight_decay * p.data
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def adamw_step(opt, clip_norm=None):
    opt.step(clip_norm=clip_norm)


class ExponentialLR:
    """Multiply the learning rate by ``factor`` once every ``every`` epochs."""

    def __init__(self, optimizer, factor=0.95, every=10):
        self.optimizer = optimizer
        self.base_lr = optimizer.lr
        self.factor = factor
        self.every = every

    def lr_at(self, epoch):
        return self.base_lr * self.factor ** (epoch // self.every)

    def step_epoch(self, epoch):
        self.optimizer.lr = self.lr_at(epoch)
        return self.optimizer.lr


def exp_lr_schedule(base_lr, epoch, factor=0.95, every=10):
    return base_lr * factor ** (epoch // every)
