import json
from builtins import classmethod
from pathlib import Path
from typing import Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, computed_field

from healthy_translate.utils.formatting import snake_case

T = TypeVar("T", bound="ArtifactModel")


class ArtifactModel(BaseModel):
    """Base model for JSON artifacts written into a dataset tree or run directory.

    Artifacts carry a schema version and their type name so a file can't be loaded as the wrong
    artifact, or by an older release that doesn't understand it. Artifacts contain no timestamps
    or ids: writing the same content twice produces byte-identical files.

    Attributes:
        v (int): Schema version number for migration support
    """

    model_config = ConfigDict(validate_assignment=True)

    v: int = Field(default=1)  # schema_version

    @computed_field()
    def model_type(self) -> str:
        return self.type_name()

    # if renaming the class, keep the original name here for parsing old files
    @classmethod
    def type_name(cls) -> str:
        return snake_case(cls.__name__)

    @classmethod
    def max_schema_version(cls) -> int:
        return 1

    @classmethod
    def load_from_file(cls: Type[T], path: Path | str) -> T:
        """Load an artifact from a JSON file.

        Raises:
            ValueError: If the file holds a different artifact type or a newer schema version
            FileNotFoundError: If the file does not exist
        """
        path = Path(path)
        with open(path, "r") as file:
            parsed_json = json.loads(file.read())
        if not isinstance(parsed_json, dict):
            raise ValueError(
                f"Cannot load from file because it does not contain a JSON object. Path: {path}"
            )
        model_type = parsed_json.get("model_type")
        if model_type != cls.type_name():
            raise ValueError(
                f"Cannot load from file because the model type is incorrect. Expected {cls.type_name()}, got {model_type}. "
                f"Class: {cls.__name__}, path: {path}"
            )
        version = parsed_json.get("v", 1)
        if not isinstance(version, int) or version > cls.max_schema_version():
            raise ValueError(
                f"Cannot load from file because the schema version is higher than the current version. Upgrade healthy-translate to the latest version. "
                f"Class: {cls.__name__}, path: {path}, version: {version}, max version: {cls.max_schema_version()}"
            )
        parsed_json.pop("model_type", None)
        return cls.model_validate(parsed_json)

    def save_to_file(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        json_data = self.model_dump_json(indent=2)
        with open(path, "w") as file:
            file.write(json_data)
        return path
