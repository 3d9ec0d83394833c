"""Exception hierarchy shared by all sceneforge modules."""


class SceneforgeError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(SceneforgeError, ValueError):
    pass


class DegenerateSignalError(SceneforgeError, ValueError):
    """A signal has zero energy where a positive one is required."""


class ConfigError(SceneforgeError, ValueError):
    pass


class EmptyCorpusError(SceneforgeError):
    pass


class UnsatisfiableSceneError(SceneforgeError):
    """No valid scene could be drawn within the configured redraw limit."""


class AssetResolutionError(SceneforgeError, FileNotFoundError):
    pass
