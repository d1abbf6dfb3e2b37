"""Prompt templates for the wire-backed providers. Braced variables are
interpolated at request time. Only the planner template is exercised by the
default pipeline; the repair and verification templates back the optional
HTTP advisor and verifier integrations."""

PLANNER_PROMPT = """You are an expert task planner that decomposes complex tasks into a structured skill DAG (Directed Acyclic Graph).

## Task
{task}

## Available Skills
{skill_summaries}

{action_grammar}

{contrastive_guidance}

## Instructions
Decompose this task into a DAG of subtasks. Each subtask should:
1. Map to one of the available skills (or be a basic action sequence)
2. Have a clear postcondition (what observation confirms success)
3. Include conditional branches where the outcome is uncertain

Output the DAG in this EXACT JSON format:
{{"type": "sequence", "children": [{{"type": "subtask", "node_id": "step_1", "skill_name": "...", "action_steps": [...], "postcondition": "..."}}, ...]}}

Rules:
- Keep total action steps <= 20 for simple tasks, <= 30 for complex tasks
- Every subtask MUST have a postcondition
- Use conditional nodes when an action's outcome is uncertain
- Follow the action grammar EXACTLY in action_steps"""


REPAIR_PROMPT = """System: You are a Senior Systems Architect specializing in error recovery and adaptive planning for interactive task execution.

A task execution has encountered a failure at one step. Your job is to diagnose the failure and repair the procedure while preserving all progress.

{action_grammar}
{contrastive_guidance}

## Context
1. Original Task: {task}
2. Overall Procedure: {overall_procedure}
3. Failed Step (#{step_index}): {failed_step_text}
4. Failure Type: {failure_type}
5. Error Information: {error_message}
6. Current State: {state_summary}
7. Remaining Steps: {remaining_steps}

## Repair Strategy Hint
Recommended: {repair_op_hint}
- REBIND: Adjust parameters/objects of the failed step
- INSERT_PREREQ: Add a missing prerequisite step
- SUBSTITUTE: Replace with an alternative approach
- REWIRE: Reorder or reconnect steps
- BYPASS: Skip if the goal is already achieved

Output:
<Diagnosis> root cause </Diagnosis>
<Repair_Strategy> operator </Repair_Strategy>
<Repaired_Procedure> full repaired procedure </Repaired_Procedure>"""


VERIFY_PROMPT = """Given the following context, determine if the subtask's postcondition has been met.

## Subtask
{node_description}

## Expected Postcondition
{postcondition}

## Recent Observations (last {window} steps)
{observations}

Answer with EXACTLY one of:
- SATISFIED --- the postcondition is clearly met
- NOT_SATISFIED --- the postcondition is not met yet
- UNCERTAIN --- cannot determine from observations

<Verdict> your answer here </Verdict>"""
