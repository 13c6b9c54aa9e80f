"""Prompt templates for the three annotation stages.

Templates are fixed strings with ``{task}`` / ``{plans}`` /
``{rest_sub_task}`` placeholders substituted verbatim; substitution uses
str.replace because the segmentation template contains literal JSON braces.
"""

from __future__ import annotations

from .types import CompletionState

VERB_PATTERNS = (
    "Grasp", "Place", "Push", "Tilt", "Hang", "Press", "Open", "Close", "Rotate",
)

PLAN_PROMPT = """\
I will give you a robot task and a video showing the robot arm performing the task.
You need to analyze actions of the robot arm from the video and decompose the task
into a sequence of detailed sub-tasks. The sequence of sub-tasks should lead to the
completion of the overall task.

###
Grasp [specific object]
e.g. "Grasp the red block"
Explain: Use this pattern when the robot isn't holding anything and needs to pick up
an object, before performing other actions like placing or lifting.
###
Place [specific object] onto / into [specific location]
e.g. "Place the cup onto the table" or "Place the screwdriver into the tool rack."
Explain: Use this pattern when the robot is holding an object and needs to put it
down at a specific location.
###
Push [specific object] [forward / backward / left / right]
e.g., "Push the blue block forward"
Explain: Use this pattern when the robot needs to move an object in a specific
direction by applying force to it, without lifting or grasping it. "Push" and
("Grasp", "Place") are mutually exclusive.
###
Tilt the gripper
e.g. "Tilt the gripper to pour the liquid" or "Tilt the gripper slightly to the left"
Explain: Use this pattern when the robot needs to adjust the angle of its gripper,
either to pour liquid or position the gripper for some specific task.
###
Hang [specific object] on / above [specific location]
e.g. "Hang the coat on the hook" or "Hang the cup above the table"
Explain: Use this pattern when the robot needs to suspend an object from a specific
location, such as hanging a coat on a hook or a cup above a table.
###
Press [specific object]
e.g., "Press the button" or "Press the power switch until it clicks."
###
Open [specific object]
e.g. "Open the door slowly"
###
Close [specific object]
e.g., "Close the lid securely"
###
Rotate [specific object]
e.g., "Rotate the knob clockwise"
###

All sub-tasks must be in exactly one of the patterns above, and should follow the
Explain for each pattern. There is no need to include the robot arm itself as an
object in the sub-tasks.

You should output sub-tasks in a numbered list format, starting from 1. Each line
contains one sub-task with a leading number and a period. No extra text or
explanation.

Task: {task}
Output:
"""

SEGMENT_PROMPT = """\
You will be shown a VIDEO of a robot task and an UNORDERED list of planned sub-tasks.

Task: "{task}"
Planned sub-tasks:
{plans}

OBJECTIVE:
For each planned sub-task, if present, mark the frames where it starts and finishes.
If a sub-task is started but not finished, set complete_frame=null. If not present
at all, set both start_frame=null and complete_frame=null, and notes="not present".
If the video shows any action was interrupted and the overall task was not completed,
set overall_notes="task not completed".

OUTPUT FORMAT:
{
  "task": "<same as input task>",
  "subtasks": [
    {"id":1, "notes":"<<=60 words optional>",
     "start_frame":<int|null>, "complete_frame":<int|null>,
     "name":"<same text from plans>"},
    ...
  ],
  "overall_notes":"<<=30 words optional>"
}

HINTS:
- Find the changes in effector pose and object motion as candidate start/complete frames.
- The start frame can be picked slightly earlier and the complete frame slightly later
  to ensure the action is fully captured.
- If multiple candidates exist, pick the final success. If retries occur, record the
  final success.
- Use the last frame of the video as reference for overall_notes.

Now process the provided video and planned sub-tasks and return the JSON result ONLY.
"""

REASON_UNFINISHED_PROMPT = """\
The image shows a robot performing a task: '{task}', which may be incomplete.
Remaining subtasks: '{rest_sub_task}'.
Explain why it's unfinished and briefly describe the next steps based on image details.

Output (<=150 words, 3 sentences):
<analysis with image details>. This task is not finished <short reason>.
<one-sentence summary of next steps>.

Example:
Task: 'put all the green objects on the pink plate.'
Image: a green apple in robot arm, a green pear on blue plate.
Output:
Image shows a green apple held by the robot and a green pear on the blue plate.
This task is not finished because both green objects are not yet on the pink plate.
The robot should place the green apple on the pink plate, then move the green pear
from the blue plate to the pink plate.
"""

REASON_FINISHED_PROMPT = """\
The image shows a robot performing a task: '{task}', which is finished.
Explain briefly why it's completed based on image details.

Output (<=50 words, 2 sentences):
<analysis with image details>. This task is finished <short reason>.

Example:
Task: 'put all the green objects on the pink plate.'
Image: both green apple and pear on pink plate.
Output:
Image shows a green apple and pear on the pink plate. This task is finished because
all green objects are placed correctly.
"""

REASON_GIVEN_UP_PROMPT = """\
The image shows a robot performing a task: '{task}', which is not finished.
Explain briefly why it's unfinished based on image details.

Output (<=50 words, 2 sentences):
<analysis with image details>. This task is not finished <short reason>.

Example:
Task: 'put all the green objects on the pink plate.'
Image: a green apple held by the robot, a green pear on blue plate.
Output:
Image shows a green apple in the robot arm and a green pear on the blue plate.
This task is not finished because neither object has been placed on the pink plate.
"""

# Advisory per-state word budgets from the templates above.
REASON_WORD_BUDGETS = {
    CompletionState.UNFINISHED: 150,
    CompletionState.FINISHED: 50,
    CompletionState.GIVEN_UP: 50,
}


def render_plan_prompt(task: str) -> str:
    return PLAN_PROMPT.replace("{task}", task)


def render_segment_prompt(task: str, plan: list[str] | tuple[str, ...]) -> str:
    lines = "\n".join(f"{i}. {name}" for i, name in enumerate(plan, 1))
    return SEGMENT_PROMPT.replace("{task}", task).replace("{plans}", lines)


def render_reason_prompt(state: CompletionState, task: str,
                         remaining: list[str] | tuple[str, ...]) -> str:
    if state is CompletionState.FINISHED:
        return REASON_FINISHED_PROMPT.replace("{task}", task)
    if state is CompletionState.GIVEN_UP:
        return REASON_GIVEN_UP_PROMPT.replace("{task}", task)
    rest = "; ".join(remaining)
    return (REASON_UNFINISHED_PROMPT
            .replace("{task}", task)
            .replace("{rest_sub_task}", rest))
