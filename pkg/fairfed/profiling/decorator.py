import functools
import re


class Decorator(object):
    """
    Base class of the profiling decorators.

    Subclasses implement ``_wrapper``:

    .. code-block:: python

        def _wrapper(self, func, *args, **kwargs):
            before()
            outputs = func(*args, **kwargs)
            after()
            return outputs

    A deactivated decorator calls the wrapped function directly.

    Parameters
    ----------
        activated: bool, optional
            The activation status of the decorator.
            Default value is True

        label_format: str, optional
            How a wrapped function is named in reports (see :meth:`get_label`).
            Default value is "{name}"

    Properties
    ----------
        activated: bool
            Get and set the activation status of the decorator.

        label_format: str
            Get and set the format of the label of a wrapped function.
    """

    label_fields = ("name", "module", "qualname")
    _placeholder = re.compile(r"(?<!\\)\{(.*?)(?<!\\)\}")

    def __init__(self, *, activated: bool = True, label_format: str = "{name}"):
        self.activated = activated
        self.label_format = label_format

    @property
    def activated(self) -> bool:
        return self._activated

    @activated.setter
    def activated(self, activated: bool):
        if not isinstance(activated, bool):
            raise TypeError("Parameter activated is not a boolean.")
        self._activated = activated

    @property
    def label_format(self) -> str:
        return self._label_format

    @label_format.setter
    def label_format(self, label_format: str):
        if not self.check_label_format(label_format):
            raise ValueError(f"Invalid label format {label_format!r}.")
        self._label_format = label_format

    def check_label_format(self, label_format: str) -> bool:
        """
        Check that the braces of a label format are balanced and only name
        ``{name}``, ``{module}`` or ``{qualname}``. Escaped braces (``\\{``) are
        taken literally.

        Raises
        ------
            TypeError: If the format is not a string.
        """
        if not isinstance(label_format, str):
            raise TypeError("Parameter label_format is not a string.")
        depth = 0
        for char in re.sub(r"\\[{}]", "", label_format):
            if char == "{":
                depth += 1
            elif char == "}":
                depth -= 1
                if depth < 0:
                    return False
        if depth != 0:
            return False
        return all(key in self.label_fields for key in self._placeholder.findall(label_format))

    def get_label(self, func) -> str:
        """
        Label of ``func`` according to :attr:`label_format`.

        Parameters
        ----------
            func: callable
                The wrapped function.

        Returns
        -------
            label: str
        """
        values = {
            "name": func.__name__,
            "module": func.__module__,
            "qualname": func.__qualname__,
        }
        label = self._placeholder.sub(lambda match: values[match.group(1)], self._label_format)
        return label.replace(r"\{", "{").replace(r"\}", "}")

    def __call__(self, func):
        @functools.wraps(func)
        def wrapped(*args, **kwargs):
            if self._activated:
                return self._wrapper(func, *args, **kwargs)
            return func(*args, **kwargs)
        return wrapped

    def _wrapper(self, func, *args, **kwargs):
        raise NotImplementedError("Method _wrapper must be implemented in subclasses.")
